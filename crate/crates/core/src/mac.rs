//! 48-bit MAC addresses and the bit tests used to classify them.
//!
//! Bit 0 of the first octet (`b0`) separates unicast (0) from multicast (1);
//! bit 1 (`b1`) separates globally administered (0) from locally
//! administered (1) addresses. A unicast, locally administered address is
//! treated as randomized, which is the same as the low hex digit of the
//! first octet being one of `2`, `6`, `A` or `E`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed MAC address `{text}` at position {position}: {reason}")]
pub struct MacParseError {
    pub text: String,
    /// Zero-based character offset of the first offending character.
    pub position: usize,
    pub reason: &'static str,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MacAddress([u8; 6]);

/// Low nibbles of the first octet that mark a randomized address.
pub const RANDOMIZED_NIBBLES: [u8; 4] = [0x2, 0x6, 0xA, 0xE];

impl MacAddress {
    pub const BROADCAST: MacAddress = MacAddress([0xff; 6]);

    pub const fn new(octets: [u8; 6]) -> Self {
        MacAddress(octets)
    }

    pub const fn octets(&self) -> [u8; 6] {
        self.0
    }

    /// Unicast (0) / multicast (1) bit.
    pub const fn b0(&self) -> u8 {
        self.0[0] & 0b01
    }

    /// Global (0) / local (1) administration bit.
    pub const fn b1(&self) -> u8 {
        (self.0[0] >> 1) & 0b01
    }

    pub const fn is_unicast(&self) -> bool {
        self.b0() == 0
    }

    pub const fn is_locally_administered(&self) -> bool {
        self.b1() == 1
    }

    pub const fn oui(&self) -> [u8; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    /// Second hex digit of the textual form, i.e. the low nibble of octet 0.
    pub const fn second_nibble(&self) -> u8 {
        self.0[0] & 0x0f
    }

    pub const fn is_broadcast(&self) -> bool {
        let o = self.0;
        o[0] == 0xff && o[1] == 0xff && o[2] == 0xff && o[3] == 0xff && o[4] == 0xff && o[5] == 0xff
    }

    /// Unicast and locally administered.
    pub const fn is_randomized(&self) -> bool {
        self.b0() == 0 && self.b1() == 1
    }

    /// Same classification through the textual nibble pattern.
    pub fn is_randomized_by_nibble(&self) -> bool {
        RANDOMIZED_NIBBLES.contains(&self.second_nibble())
    }
}

pub fn parse_mac(text: &str) -> Result<MacAddress, MacParseError> {
    text.parse()
}

pub fn is_randomized(mac: &MacAddress) -> bool {
    mac.is_randomized()
}

impl FromStr for MacAddress {
    type Err = MacParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |position, reason| MacParseError {
            text: text.to_string(),
            position,
            reason,
        };
        let bytes = text.as_bytes();
        if bytes.len() != 17 {
            return Err(err(bytes.len().min(17), "expected 17 characters"));
        }
        let mut octets = [0u8; 6];
        for (i, octet) in octets.iter_mut().enumerate() {
            let at = i * 3;
            if i > 0 && bytes[at - 1] != b':' {
                return Err(err(at - 1, "expected ':'"));
            }
            let hi = hex_value(bytes[at]).ok_or_else(|| err(at, "not a hex digit"))?;
            let lo = hex_value(bytes[at + 1]).ok_or_else(|| err(at + 1, "not a hex digit"))?;
            *octet = (hi << 4) | lo;
        }
        Ok(MacAddress(octets))
    }
}

fn hex_value(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        b'A'..=b'F' => Some(c - b'A' + 10),
        _ => None,
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddress({self})")
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Hands out locally administered unicast addresses (first octet `0x02`)
/// that never repeat for the lifetime of the generator.
#[derive(Debug, Clone, Default)]
pub struct RepresentativeMacs {
    next: u64,
}

impl RepresentativeMacs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn issued(&self) -> u64 {
        self.next
    }

    pub fn fresh(&mut self) -> MacAddress {
        let n = self.next;
        self.next += 1;
        assert!(n < 1 << 40, "representative address space exhausted");
        let b = n.to_be_bytes();
        MacAddress([0x02, b[3], b[4], b[5], b[6], b[7]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_addresses() {
        let m = parse_mac("02:00:00:00:00:01").unwrap();
        assert!(m.is_randomized());
        assert_eq!(m.second_nibble(), 2);

        let m = parse_mac("00:11:22:33:44:55").unwrap();
        assert_eq!((m.b0(), m.b1()), (0, 0));
        assert!(!m.is_randomized());

        let m = parse_mac("01:00:5e:00:00:01").unwrap();
        assert_eq!(m.b0(), 1);
        assert!(!m.is_randomized());

        let m = parse_mac("da:a1:19:aa:bb:cc").unwrap();
        assert!(m.is_randomized());
        assert_eq!(m.second_nibble(), 0xA);
        assert_eq!(m.oui(), [0xda, 0xa1, 0x19]);

        assert!(!MacAddress::BROADCAST.is_randomized());
        assert!(MacAddress::BROADCAST.is_broadcast());
    }

    #[test]
    fn parse_is_case_insensitive() {
        assert_eq!(
            parse_mac("DA:A1:19:AA:BB:CC").unwrap(),
            parse_mac("da:a1:19:aa:bb:cc").unwrap()
        );
    }

    #[test]
    fn parse_errors_name_position() {
        let e = parse_mac("00:11:22:33:44:5g").unwrap_err();
        assert_eq!(e.position, 16);
        let e = parse_mac("00-11:22:33:44:55").unwrap_err();
        assert_eq!(e.position, 2);
        let e = parse_mac("00:11:22").unwrap_err();
        assert_eq!(e.reason, "expected 17 characters");
        assert!(parse_mac("").is_err());
    }

    #[test]
    fn bit_and_nibble_rules_agree_on_every_first_octet() {
        for first in 0..=255u8 {
            let m = MacAddress::new([first, 0, 0, 0, 0, 0]);
            assert_eq!(m.is_randomized(), m.is_randomized_by_nibble(), "octet {first:#04x}");
        }
    }

    #[test]
    fn representative_macs_are_distinct_and_local() {
        let mut gen = RepresentativeMacs::new();
        let a = gen.fresh();
        let b = gen.fresh();
        assert_ne!(a, b);
        assert!(a.is_randomized() && b.is_randomized());
        assert_eq!(a.second_nibble(), 2);
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(octets in any::<[u8; 6]>()) {
            let m = MacAddress::new(octets);
            let text = m.to_string();
            prop_assert_eq!(text.clone(), text.to_lowercase());
            prop_assert_eq!(parse_mac(&text).unwrap(), m);
        }
    }
}
