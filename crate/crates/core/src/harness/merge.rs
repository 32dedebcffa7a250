use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Recursively overlays `overlay` onto `base`: tables merge key by key,
/// everything else is replaced.
pub fn merge_values(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_values(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses `text` as a partial override of `defaults`, so a table that sets
/// one key keeps every other default of that table.
pub fn overlay_defaults<T: Serialize + DeserializeOwned>(defaults: &T, text: &str, origin: &str) -> Result<T> {
    let overlay = toml::from_str::<toml::Table>(text).map_err(|e| Error::Config {
        path: String::new(),
        message: format!("{origin}: {}", e.message()),
    })?;
    overlay_value(defaults, toml::Value::Table(overlay), origin)
}

/// [`overlay_defaults`] on an already parsed table.
pub fn overlay_value<T: Serialize + DeserializeOwned>(defaults: &T, overlay: toml::Value, origin: &str) -> Result<T> {
    let mut base = toml::Value::try_from(defaults).map_err(|e| Error::Config {
        path: String::new(),
        message: format!("{origin}: {e}"),
    })?;
    merge_values(&mut base, overlay);
    from_value(base, origin)
}

/// Deserializes `value`, reporting the dotted key path of the first failure.
pub fn from_value<T: DeserializeOwned>(value: toml::Value, origin: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            path: if path == "." { String::new() } else { path },
            message: format!("{origin}: {}", e.into_inner().message()),
        }
    })
}

/// Parses a command-line value as TOML (number, bool, array, quoted
/// string), falling back to a bare string.
pub fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `dotted` (e.g. `frl.dqn.lr`) inside `root`, creating tables on the
/// way. Fails if an intermediate key holds a non-table value.
pub fn set_dotted(root: &mut toml::Value, dotted: &str, value: toml::Value) -> Result<()> {
    let keys: Vec<&str> = dotted.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config {
            path: dotted.to_string(),
            message: "empty key segment".into(),
        });
    }
    let mut node = root;
    for (i, k) in keys.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| Error::Config {
            path: keys[..i].join("."),
            message: "not a table".into(),
        })?;
        if i + 1 == keys.len() {
            table.insert((*k).to_string(), value);
            return Ok(());
        }
        node = table
            .entry((*k).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("split yields at least one key")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        a: u32,
        b: Vec<u32>,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Outer {
        x: f64,
        inner: Inner,
    }

    fn defaults() -> Outer {
        Outer {
            x: 1.5,
            inner: Inner { a: 3, b: vec![1, 2] },
        }
    }

    #[test]
    fn partial_tables_keep_sibling_defaults() {
        let got: Outer = overlay_defaults(&defaults(), "[inner]\na = 9\n", "t").unwrap();
        assert_eq!(got, Outer { x: 1.5, inner: Inner { a: 9, b: vec![1, 2] } });
        let got: Outer = overlay_defaults(&defaults(), "inner.b = [7]\nx = 2.0", "t").unwrap();
        assert_eq!(got.inner.b, vec![7]);
        assert_eq!(got.x, 2.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = overlay_defaults(&defaults(), "[inner]\nc = 1\n", "cfg.toml").unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "inner.c");
                assert!(message.starts_with("cfg.toml"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn type_errors_name_the_key() {
        let err = overlay_defaults(&defaults(), "inner.b = [1, \"x\"]", "t").unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "inner.b[1]"), "{err}");
        let err = overlay_defaults(&defaults(), "x = [", "t").unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn scalars_parse_as_toml() {
        assert_eq!(parse_scalar("0.5"), toml::Value::Float(0.5));
        assert_eq!(parse_scalar("7"), toml::Value::Integer(7));
        assert_eq!(parse_scalar("true"), toml::Value::Boolean(true));
        assert_eq!(parse_scalar("sign_flip"), toml::Value::String("sign_flip".into()));
        assert_eq!(parse_scalar("trimmed_mean(0.2)"), toml::Value::String("trimmed_mean(0.2)".into()));
    }

    #[test]
    fn dotted_set_reaches_nested_keys() {
        let mut v = toml::Value::try_from(defaults()).unwrap();
        set_dotted(&mut v, "inner.a", toml::Value::Integer(5)).unwrap();
        let got: Outer = from_value(v.clone(), "t").unwrap();
        assert_eq!(got.inner.a, 5);
        assert!(set_dotted(&mut v, "x.y", toml::Value::Integer(1)).is_err());
        assert!(set_dotted(&mut v, "inner..a", toml::Value::Integer(1)).is_err());
    }
}
