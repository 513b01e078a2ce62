//! `key=value` run configuration: built-in defaults, then a config file, then
//! command-line flags. The resolved result is written back as a snapshot that
//! reproduces the run.

use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key=value, got `{raw}`", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    command: &'static str,
    /// Every known key with its resolved value, in declaration order.
    entries: Vec<(&'static str, String)>,
}

impl RunConfig {
    pub fn resolve(
        command: &'static str,
        defaults: &[(&'static str, &'static str)],
        file: Option<&Path>,
        flags: &[(&'static str, Option<&str>)],
    ) -> Result<Self> {
        let mut entries: Vec<(&'static str, String)> =
            defaults.iter().map(|(k, v)| (*k, v.to_string())).collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in parse_config_text(&text).with_context(|| path.display().to_string())? {
                let slot = entries
                    .iter_mut()
                    .find(|(name, _)| *name == k)
                    .ok_or_else(|| {
                        anyhow!("{}: unknown key `{k}` for {command}", path.display())
                    })?;
                slot.1 = v;
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                let slot = entries
                    .iter_mut()
                    .find(|(name, _)| name == k)
                    .expect("flag has a default");
                slot.1 = v.to_string();
            }
        }
        Ok(RunConfig { command, entries })
    }

    pub fn raw(&self, key: &str) -> &str {
        &self
            .entries
            .iter()
            .find(|(k, _)| *k == key)
            .unwrap_or_else(|| panic!("undeclared key {key}"))
            .1
    }

    /// The value of `key`, which must be non-empty.
    pub fn required(&self, key: &str) -> Result<&str> {
        match self.raw(key) {
            "" => bail!("{}: missing required setting `{key}`", self.command),
            v => Ok(v),
        }
    }

    pub fn optional(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.required(key)?;
        v.parse()
            .map_err(|e| anyhow!("{}: invalid value `{v}` for `{key}`: {e}", self.command))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.required(key)? {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            v => bail!("{}: `{key}` must be true or false, got `{v}`", self.command),
        }
    }

    pub fn snapshot_text(&self) -> String {
        let mut out = format!("# resolved configuration for `slotcast {}`\n", self.command);
        for (k, v) in &self.entries {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.snapshot_text())
            .with_context(|| format!("writing config snapshot {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULTS: &[(&str, &str)] = &[("seed", "0"), ("out", ""), ("rate", "0.5")];

    #[test]
    fn comments_and_blank_lines() {
        let parsed = parse_config_text("# header\n\nseed = 4  # trailing\nout=a.txt\n").unwrap();
        assert_eq!(
            parsed,
            vec![("seed".into(), "4".into()), ("out".into(), "a.txt".into())]
        );
        assert!(parse_config_text("nonsense").is_err());
    }

    #[test]
    fn flags_override_file_and_snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "seed=4\nout=x\n").unwrap();
        let cfg = RunConfig::resolve(
            "test",
            DEFAULTS,
            Some(&file),
            &[("seed", Some("9")), ("out", None)],
        )
        .unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), 9);
        assert_eq!(cfg.raw("out"), "x");
        assert_eq!(cfg.get::<f64>("rate").unwrap(), 0.5);

        let snap = dir.path().join("snap.cfg");
        cfg.write_snapshot(&snap).unwrap();
        let again = RunConfig::resolve("test", DEFAULTS, Some(&snap), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_and_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "bogus=1\n").unwrap();
        assert!(RunConfig::resolve("test", DEFAULTS, Some(&file), &[]).is_err());
        let cfg = RunConfig::resolve("test", DEFAULTS, None, &[]).unwrap();
        assert!(cfg.required("out").is_err());
        assert!(cfg.optional("out").is_none());
    }
}
