//! Ordered key/value text map carried as optional message parameters.

use indexmap::IndexMap;
use std::fmt;

/// Returns true when `key` matches `[A-Za-z0-9_.]+`.
pub fn is_valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'.')
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid property key {0:?}")]
pub struct InvalidKey(pub String);

/// Insertion-ordered properties. Setting an existing key replaces its value
/// in place, so a lookup always sees the last value set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Properties {
    entries: IndexMap<String, String>,
}

impl Properties {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) -> Result<(), InvalidKey> {
        let key = key.into();
        if !is_valid_key(&key) {
            return Err(InvalidKey(key));
        }
        self.entries.insert(key, value.into());
        Ok(())
    }

    /// Builder-style `set` for keys known to be valid at compile time.
    ///
    /// Panics on an invalid key.
    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.set(key, value).expect("valid property key");
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.shift_remove(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Overlays `other` on top of `self`; keys in `other` win.
    pub fn merged(&self, other: &Properties) -> Properties {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.entries.insert(k.to_owned(), v.to_owned());
        }
        out
    }
}

impl fmt::Display for Properties {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in self.iter() {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Properties {
    type Item = (&'a str, &'a str);
    type IntoIter = Box<dyn Iterator<Item = (&'a str, &'a str)> + 'a>;

    fn into_iter(self) -> Self::IntoIter {
        Box::new(self.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_alphabet() {
        assert!(is_valid_key("trax.version"));
        assert!(is_valid_key("A_9"));
        assert!(!is_valid_key(""));
        assert!(!is_valid_key("a-b"));
        assert!(!is_valid_key("a b"));
        assert!(!is_valid_key("a=b"));
    }

    #[test]
    fn last_value_wins_and_position_is_kept() {
        let mut p = Properties::new();
        p.set("a", "1").unwrap();
        p.set("b", "2").unwrap();
        p.set("a", "3").unwrap();
        assert_eq!(p.get("a"), Some("3"));
        let keys: Vec<_> = p.iter().map(|(k, _)| k).collect();
        assert_eq!(keys, ["a", "b"]);
    }

    #[test]
    fn rejects_bad_key() {
        let mut p = Properties::new();
        assert_eq!(p.set("x y", "1"), Err(InvalidKey("x y".into())));
        assert!(p.is_empty());
    }

    #[test]
    fn merge_overrides() {
        let base = Properties::new().with("a", "1").with("b", "2");
        let over = Properties::new().with("b", "9").with("c", "3");
        let m = base.merged(&over);
        assert_eq!(m.to_string(), "a=1 b=9 c=3");
    }
}
