use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Word-level quality label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "BAD")]
    Bad,
}

impl Tag {
    /// Class index used by the models: OK = 0, BAD = 1.
    pub fn class(self) -> usize {
        match self {
            Tag::Ok => 0,
            Tag::Bad => 1,
        }
    }

    pub fn from_class(c: usize) -> Self {
        if c == 1 {
            Tag::Bad
        } else {
            Tag::Ok
        }
    }

    /// BAD when the BAD probability reaches `threshold`.
    pub fn from_bad_prob(p: f64, threshold: f64) -> Self {
        if p >= threshold {
            Tag::Bad
        } else {
            Tag::Ok
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Ok => "OK",
            Tag::Bad => "BAD",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownTag(pub String);

impl fmt::Display for UnknownTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown tag {:?} (expected OK or BAD)", self.0)
    }
}

impl std::error::Error for UnknownTag {}

impl FromStr for Tag {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OK" => Ok(Tag::Ok),
            "BAD" => Ok(Tag::Bad),
            other => Err(UnknownTag(other.to_string())),
        }
    }
}

/// The three word-level tag streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Mt,
    Gap,
    Source,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Mt, Stream::Gap, Stream::Source];

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Mt => "mt",
            Stream::Gap => "gap",
            Stream::Source => "source",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stream {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mt" | "target" => Ok(Stream::Mt),
            "gap" | "gaps" => Ok(Stream::Gap),
            "source" | "src" => Ok(Stream::Source),
            other => Err(format!("unknown tag stream {other:?}")),
        }
    }
}
