//! Config-file merging. Keys are flag names; the file's values are spliced
//! into argv right after the subcommand, so flags given on the command line
//! (which come later) override them.

use std::ffi::OsString;

use anharmonic::Error;

use crate::args::SUBCOMMANDS;

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

fn render(value: &toml::Value) -> Result<Option<String>, Error> {
    Ok(match value {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(_) => None,
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>, Error> = items
                .iter()
                .map(|v| render(v)?.ok_or_else(|| Error::Config("nested booleans are not flag values".into())))
                .collect();
            Some(parts?.join(","))
        }
        other => return Err(Error::Config(format!("unsupported config value {other}"))),
    })
}

/// Converts a parsed config table into flags.
pub fn table_to_flags(table: &toml::Table) -> Result<Vec<OsString>, Error> {
    let mut out = Vec::new();
    for (key, value) in table {
        if key == "config" {
            continue;
        }
        let flag = format!("--{key}");
        match (value, render(value)?) {
            (toml::Value::Boolean(true), _) => out.push(flag.into()),
            (toml::Value::Boolean(false), _) => {}
            (_, Some(v)) => {
                out.push(flag.into());
                out.push(v.into());
            }
            (_, None) => {}
        }
    }
    Ok(out)
}

/// Returns argv with the config file's flags inserted.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, Error> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)?;
    let table: toml::Table =
        text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.to_string_lossy())))?;
    let flags = table_to_flags(&table)?;
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(args.len(), |i| i + 1);
    let mut merged = args[..at].to_vec();
    merged.extend(flags);
    merged.extend_from_slice(&args[at..]);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_from_table() {
        let t: toml::Table = "theta = 0.6\nm = 2\nn-range = \"1:5\"\neps = [0.001, 0.0001]\nflag = true\noff = false"
            .parse()
            .unwrap();
        let flags: Vec<String> = table_to_flags(&t).unwrap().into_iter().map(|s| s.into_string().unwrap()).collect();
        let joined = flags.join(" ");
        assert!(joined.contains("--theta 0.6"));
        assert!(joined.contains("--m 2"));
        assert!(joined.contains("--n-range 1:5"));
        assert!(joined.contains("--eps 0.001,0.0001"));
        assert!(joined.contains("--flag") && !joined.contains("--off"));
    }

    #[test]
    fn no_config_is_identity() {
        let a: Vec<OsString> = ["x", "kappa", "--m", "2"].iter().map(OsString::from).collect();
        assert_eq!(expand(a.clone()).unwrap(), a);
    }
}
