use core::fmt;

/// Errors raised by the simulated flash device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlashError {
    /// Page or block address outside the device geometry.
    OutOfRange,
    /// Data length does not match the page size.
    BadLength,
    /// The write violates the device mode's overwrite rules.
    IllegalWrite,
    /// Operation not supported in the device's mode.
    Unsupported,
    /// The injected fault limit was reached; the operation was not applied.
    Crashed,
}

impl fmt::Display for FlashError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlashError::OutOfRange => write!(f, "address out of range"),
            FlashError::BadLength => write!(f, "data length does not match page size"),
            FlashError::IllegalWrite => write!(f, "illegal write for device mode"),
            FlashError::Unsupported => write!(f, "operation unsupported in this mode"),
            FlashError::Crashed => write!(f, "injected crash point reached"),
        }
    }
}

/// Errors raised by the index engines and their subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineError {
    Flash(FlashError),
    /// A node does not fit in a page, or a page has no free slot.
    CapacityExceeded,
    /// No free storage page is available.
    StorageFull,
    /// Every buffer frame is pinned.
    PoolExhausted,
    /// The variant cannot run on the device's mode.
    IncompatibleMode,
    /// A page could not be decoded as a node.
    Corrupt,
    /// Recovery found no root page on storage.
    EmptyTree,
    /// Recovery could not fit the rebuilt mappings in the configured table.
    RecoveryOverflow,
    /// Invalid engine configuration.
    BadConfig,
}

impl From<FlashError> for EngineError {
    fn from(e: FlashError) -> Self {
        EngineError::Flash(e)
    }
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Flash(e) => write!(f, "flash: {e}"),
            EngineError::CapacityExceeded => write!(f, "capacity exceeded"),
            EngineError::StorageFull => write!(f, "storage full"),
            EngineError::PoolExhausted => write!(f, "all buffer frames pinned"),
            EngineError::IncompatibleMode => write!(f, "variant incompatible with device mode"),
            EngineError::Corrupt => write!(f, "corrupt page"),
            EngineError::EmptyTree => write!(f, "no root found on storage"),
            EngineError::RecoveryOverflow => write!(f, "rebuilt mappings exceed table capacity"),
            EngineError::BadConfig => write!(f, "invalid configuration"),
        }
    }
}
