use thiserror::Error;

/// Every failure mode of the library. Certificate failures are not errors;
/// they come back as a failing [`crate::Certificate`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForgeError {
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("ball of radius {radius} around element #{center} escapes the window")]
    BallEscapesWindow { center: u32, radius: u64 },
    #[error("ball of radius {radius} around element #{center} escapes the certified core {core}")]
    BallEscapesCore { center: u32, radius: u64, core: u64 },
    #[error("element is outside the window")]
    ElementOutsideWindow,
    #[error("no level n <= {budget} has an element at distance >= {target}")]
    BudgetExhausted { target: u64, budget: usize },
    #[error("backend cannot count: {0}")]
    BackendCannotCount(String),
    #[error("value not representable: {0}")]
    Unrepresentable(String),
    #[error("infeasible schedule: {0}")]
    Infeasible(String),
    #[error("capacity exceeded: wanted {wanted} sites, found {found}")]
    CapacityExceeded { wanted: usize, found: usize },
    #[error("coloring stuck at element #{0}")]
    ColoringStuck(u32),
    #[error("patch precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("core exhausted: {0}")]
    CoreExhausted(String),
    #[error("dirty balls around #{0} and #{1} overlap")]
    OverlapViolation(u32, u32),
    #[error("repair cascade diverged: {0}")]
    CascadeDiverged(String),
    #[error("no marker of level {0} has its ball inside the core")]
    NoMarkerInCore(usize),
    #[error("search exhausted: {0}")]
    SearchExhausted(String),
    #[error("nothing stabilized: {0}")]
    NothingStabilized(String),
    #[error("core too small: need {needed}, have {have}")]
    CoreTooSmall { needed: u64, have: u64 },
    #[error("balls live at different levels ({0} vs {1})")]
    LevelMismatch(usize, usize),
    #[error("bit streams differ in depth ({0} vs {1})")]
    DepthMismatch(usize, usize),
    #[error("set is not {0}-separated")]
    NotSeparated(u64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, ForgeError>;
