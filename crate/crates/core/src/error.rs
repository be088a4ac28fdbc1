use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {lat} rad is inside the pole guard")]
    PoleGuard { lat: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AtmoError {
    #[error("{what} = {value} is outside the troposphere model domain")]
    Domain { what: &'static str, value: f64 },
    #[error("geopotential altitude {0} m is not below the Earth radius")]
    AboveRadius(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Atmo(#[from] AtmoError),
    #[error("envelope guard: pitch {pitch_deg:.1} deg at t = {t:.2} s")]
    Envelope { t: f64, pitch_deg: f64 },
    #[error("filter covariance could not be recovered at t = {t:.2} s ({filter})")]
    Covariance { t: f64, filter: &'static str },
    #[error("GNSS measurement requested at t = {t:.2} s after signal loss")]
    GnssUnavailable { t: f64 },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("unknown preset '{name}' for {family} (expected one of: {expected})")]
    UnknownPreset { family: &'static str, name: String, expected: String },
}

impl ConfigError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid { path: path.into(), message: message.into() }
    }
}
