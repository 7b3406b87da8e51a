use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartyKind {
    User,
    SmartMeter,
    Lemo,
    Supplier,
    Server,
    KeyAuthority,
    Dso,
}

impl PartyKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::User => "user",
            Self::SmartMeter => "sm",
            Self::Lemo => "lemo",
            Self::Supplier => "supplier",
            Self::Server => "cs",
            Self::KeyAuthority => "ka",
            Self::Dso => "dso",
        }
    }
}

/// A protocol participant. Singletons use index 0; the servers are
/// `cs:0`, `cs:1`, `cs:2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartyId {
    pub kind: PartyKind,
    pub index: u32,
}

impl PartyId {
    pub fn user(i: u32) -> Self {
        Self { kind: PartyKind::User, index: i }
    }
    pub fn meter(i: u32) -> Self {
        Self { kind: PartyKind::SmartMeter, index: i }
    }
    pub fn lemo() -> Self {
        Self { kind: PartyKind::Lemo, index: 0 }
    }
    pub fn supplier(j: u32) -> Self {
        Self { kind: PartyKind::Supplier, index: j }
    }
    pub fn server(p: usize) -> Self {
        Self { kind: PartyKind::Server, index: p as u32 }
    }
    pub fn ka() -> Self {
        Self { kind: PartyKind::KeyAuthority, index: 0 }
    }
    pub fn dso() -> Self {
        Self { kind: PartyKind::Dso, index: 0 }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PartyKind::Lemo | PartyKind::KeyAuthority | PartyKind::Dso => f.write_str(self.kind.label()),
            _ => write!(f, "{}:{}", self.kind.label(), self.index),
        }
    }
}

impl std::str::FromStr for PartyId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, idx) = match s.split_once(':') {
            Some((k, i)) => (k, i.parse::<u32>().map_err(|e| format!("bad index in `{s}`: {e}"))?),
            None => (s, 0),
        };
        let kind = match kind {
            "user" => PartyKind::User,
            "sm" => PartyKind::SmartMeter,
            "lemo" => PartyKind::Lemo,
            "supplier" => PartyKind::Supplier,
            "cs" if idx < 3 => PartyKind::Server,
            "ka" => PartyKind::KeyAuthority,
            "dso" => PartyKind::Dso,
            _ => return Err(format!("unknown party `{s}`")),
        };
        Ok(Self { kind, index: idx })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_roundtrip() {
        for p in [PartyId::user(3), PartyId::meter(0), PartyId::lemo(), PartyId::supplier(5), PartyId::server(2), PartyId::ka(), PartyId::dso()] {
            assert_eq!(p.to_string().parse::<PartyId>().unwrap(), p);
        }
        assert!("cs:3".parse::<PartyId>().is_err());
        assert!("bank".parse::<PartyId>().is_err());
    }
}
