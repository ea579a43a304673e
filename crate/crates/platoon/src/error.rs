use std::fmt;

/// Failure class of a command; decides the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Config => 2,
            Self::Data => 3,
            Self::Numeric => 4,
        }
    }
}

/// Anything printable that can seed an error.
pub trait Message: fmt::Display + fmt::Debug + Send + Sync + 'static {}

impl<T: fmt::Display + fmt::Debug + Send + Sync + 'static> Message for T {}

#[derive(Debug)]
pub struct Error {
    pub kind: ErrorKind,
    pub source: anyhow::Error,
}

impl Error {
    pub fn config(e: impl Message) -> Self {
        Self {
            kind: ErrorKind::Config,
            source: anyhow::Error::msg(e),
        }
    }

    pub fn data(e: impl Message) -> Self {
        Self {
            kind: ErrorKind::Data,
            source: anyhow::Error::msg(e),
        }
    }

    pub fn numeric(e: impl Message) -> Self {
        Self {
            kind: ErrorKind::Numeric,
            source: anyhow::Error::msg(e),
        }
    }

    pub fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            kind: self.kind,
            source: self.source.context(msg),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl std::error::Error for Error {}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<platoon_core::sim::SimError> for Error {
    fn from(e: platoon_core::sim::SimError) -> Self {
        use platoon_core::sim::SimError;
        match e {
            SimError::InvalidScenario(_) | SimError::Param(_) => Self::config(e),
            _ => Self::numeric(e),
        }
    }
}

impl From<platoon_core::synthesis::SynthesisError> for Error {
    fn from(e: platoon_core::synthesis::SynthesisError) -> Self {
        use platoon_core::synthesis::SynthesisError;
        match e {
            SynthesisError::InvalidGrid(_) => Self::config(e),
            _ => Self::numeric(e),
        }
    }
}

impl From<platoon_core::stability::StabilityError> for Error {
    fn from(e: platoon_core::stability::StabilityError) -> Self {
        use platoon_core::stability::StabilityError;
        match e {
            StabilityError::BadWidth { .. } | StabilityError::BadWindow => Self::config(e),
            StabilityError::LengthMismatch { .. } | StabilityError::Misaligned(_) => Self::data(e),
            _ => Self::numeric(e),
        }
    }
}

impl From<platoon_core::calibration::CalibrationError> for Error {
    fn from(e: platoon_core::calibration::CalibrationError) -> Self {
        use platoon_core::calibration::CalibrationError;
        match e {
            CalibrationError::Invalid(_) | CalibrationError::De(_) => Self::config(e),
            CalibrationError::LengthMismatch { .. } | CalibrationError::Empty | CalibrationError::ZeroEnergy(_) => {
                Self::data(e)
            }
            CalibrationError::Sim(s) => s.into(),
            CalibrationError::Failed { .. } => Self::numeric(e),
        }
    }
}

impl From<platoon_core::metrics::MetricsError> for Error {
    fn from(e: platoon_core::metrics::MetricsError) -> Self {
        use platoon_core::metrics::MetricsError;
        match e {
            MetricsError::Misaligned(_) => Self::data(e),
            _ => Self::config(e),
        }
    }
}
