//! Vendor lookup by Organization Unique Identifier.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mac::MacAddress;

const BUNDLED: &str = include_str!("../data/smartphone_oui.tsv");

/// OUI to vendor map. The bundled table lists handset vendors only, so a hit
/// doubles as "recognized smartphone".
#[derive(Debug, Clone, Default)]
pub struct OuiTable {
    entries: HashMap<[u8; 3], String>,
}

impl OuiTable {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled OUI table is well formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `HEXPREFIX<TAB>Vendor` lines; `#` starts a comment line.
    /// Prefixes may also be written colon-separated (`00:03:93`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (prefix, vendor) = line
                .split_once(['\t', ','])
                .ok_or_else(|| Error::schema(i + 1, "expected `PREFIX<TAB>vendor`"))?;
            let hex: String = prefix.chars().filter(|c| *c != ':' && *c != '-').collect();
            if hex.len() != 6 {
                return Err(Error::schema(i + 1, format!("bad OUI prefix `{prefix}`")));
            }
            let mut oui = [0u8; 3];
            for (k, o) in oui.iter_mut().enumerate() {
                *o = u8::from_str_radix(&hex[2 * k..2 * k + 2], 16)
                    .map_err(|_| Error::schema(i + 1, format!("bad OUI prefix `{prefix}`")))?;
            }
            entries.insert(oui, vendor.trim().to_string());
        }
        Ok(OuiTable { entries })
    }

    pub fn from_entries<I: IntoIterator<Item = ([u8; 3], String)>>(iter: I) -> Self {
        OuiTable {
            entries: iter.into_iter().collect(),
        }
    }

    pub fn lookup(&self, mac: &MacAddress) -> Option<&str> {
        self.entries.get(&mac.oui()).map(String::as_str)
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &[u8; 3]> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn oui_lookup<'t>(mac: &MacAddress, table: &'t OuiTable) -> Option<&'t str> {
    table.lookup(mac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::parse_mac;

    #[test]
    fn hit_and_miss() {
        let table = OuiTable::bundled();
        assert_eq!(oui_lookup(&parse_mac("00:03:93:12:34:56").unwrap(), &table), Some("Apple"));
        assert_eq!(oui_lookup(&parse_mac("00:11:22:33:44:55").unwrap(), &table), None);
    }

    #[test]
    fn bundled_table_has_no_randomized_prefixes() {
        let table = OuiTable::bundled();
        assert!(table.len() > 30);
        for p in table.prefixes() {
            let m = MacAddress::new([p[0], p[1], p[2], 0, 0, 0]);
            assert!(!m.is_randomized_by_nibble(), "{m}");
            assert!(m.is_unicast());
        }
    }

    #[test]
    fn randomized_lookup_is_mechanical() {
        let table = OuiTable::from_entries([([0xda, 0xa1, 0x19], "Google".to_string())]);
        let m = parse_mac("da:a1:19:00:00:01").unwrap();
        assert_eq!(table.lookup(&m), Some("Google"));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(OuiTable::parse("zz\tfoo").is_err());
        assert!(OuiTable::parse("0003\tApple").is_err());
        let t = OuiTable::parse("00:03:93\tApple\n# note\n").unwrap();
        assert_eq!(t.len(), 1);
    }
}
