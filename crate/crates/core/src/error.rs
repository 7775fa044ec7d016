use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },

    #[error("{what} index {index} out of range (limit {limit})")]
    Index { what: &'static str, index: usize, limit: usize },

    #[error("k-core filtering with k_user={k_user}, k_item={k_item} removed every interaction; try a smaller k")]
    EmptyCore { k_user: usize, k_item: usize },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("no interactions to process")]
    Empty,

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("every user with training interactions has already interacted with all {num_items} items")]
    AllUsersSaturated { num_items: usize },

    #[error("pair (user {user}, item {item}) is not a training interaction")]
    NotAnEdge { user: u32, item: u32 },

    #[error("contrast scheme {scheme} needs propagation depth {required}, stack has {available}")]
    InsufficientDepth { scheme: &'static str, required: usize, available: usize },

    #[error("non-finite gradient in row {row}")]
    NonFiniteGradient { row: usize },

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (bpr={bpr}, cl={cl}, reg={reg})"
    )]
    NonFiniteLoss { epoch: usize, batch: usize, bpr: f64, cl: f64, reg: f64 },

    #[error("only {formed} of {requested} sparsity groups are non-empty; use fewer groups")]
    TooFewGroups { requested: usize, formed: usize },
}
