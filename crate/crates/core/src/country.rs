use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A country code, normally ISO 3166-1 alpha-2 (`"US"`, `"FR"`).
///
/// Codes are stored upper-cased. Anything from one to eight ASCII
/// alphanumerics is accepted so that territory sets outside ISO (and small
/// hand-written fixtures) still work.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryCode(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid country code {0:?}")]
pub struct InvalidCountryCode(pub String);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for CountryCode {
    type Err = InvalidCountryCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || t.len() > 8 || !t.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(InvalidCountryCode(s.to_string()));
        }
        Ok(Self(t.to_ascii_uppercase()))
    }
}

impl TryFrom<String> for CountryCode {
    type Error = InvalidCountryCode;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CountryCode> for String {
    fn from(c: CountryCode) -> String {
        c.0
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for CountryCode {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Shorthand for literals in tests and examples. Panics on an invalid code.
pub fn cc(code: &str) -> CountryCode {
    code.parse().expect("valid country code")
}
