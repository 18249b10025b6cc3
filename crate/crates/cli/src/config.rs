//! INI-like run configuration: `[section]` headers and `key = value`
//! lines, `#` or `;` comments. The raw bytes are retained so a parsed
//! config echoes back byte-identically.

use std::collections::BTreeMap;

#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parsed configuration with byte-exact echo of the source.
#[derive(Debug, Clone)]
pub struct RunConfig {
    raw: String,
    values: BTreeMap<(String, String), (usize, String)>,
}

/// The accepted (section, key) table; anything else is a parse error with
/// a line number, so typos fail loudly instead of silently using defaults.
const SCHEMA: &[(&str, &[&str])] = &[
    ("problem", &["d", "t_final"]),
    ("noise", &["n_star", "j_star"]),
    ("time", &["steps"]),
    ("fem", &["degree", "elements"]),
    ("spectral", &["cutoff"]),
    ("mode", &["kind", "replicates", "bootstrap"]),
    ("seeds", &["master", "replicate"]),
    ("sweep", &["parameter", "levels"]),
    ("study", &["t", "quad_points", "step_index", "theta_split", "times"]),
    ("guards", &["dof_limit", "eig_dof_limit"]),
    ("output", &["dir"]),
];

impl RunConfig {
    pub fn parse(raw: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (idx, line) in raw.lines().enumerate() {
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return Err(ConfigError {
                        line: lineno,
                        message: format!("unterminated section header {trimmed:?}"),
                    });
                };
                section = name.trim().to_string();
                if !SCHEMA.iter().any(|(s, _)| *s == section) {
                    return Err(ConfigError {
                        line: lineno,
                        message: format!("unknown section [{section}]"),
                    });
                }
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError {
                    line: lineno,
                    message: format!("expected `key = value`, got {trimmed:?}"),
                });
            };
            if section.is_empty() {
                return Err(ConfigError {
                    line: lineno,
                    message: "key outside of any [section]".into(),
                });
            }
            let key = key.trim().to_string();
            let accepted = SCHEMA
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, keys)| keys.contains(&key.as_str()))
                .unwrap_or(false);
            if !accepted {
                return Err(ConfigError {
                    line: lineno,
                    message: format!("unknown key `{key}` in section [{section}]"),
                });
            }
            let prev = values
                .insert((section.clone(), key.clone()), (lineno, value.trim().to_string()));
            if prev.is_some() {
                return Err(ConfigError {
                    line: lineno,
                    message: format!("duplicate key `{key}` in section [{section}]"),
                });
            }
        }
        Ok(RunConfig { raw: raw.to_string(), values })
    }

    /// Byte-identical echo of the parsed source.
    pub fn echo(&self) -> &str {
        &self.raw
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(|(_, v)| v.as_str())
    }

    fn parse_with<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
    ) -> Result<Option<T>, ConfigError> {
        match self.values.get(&(section.to_string(), key.to_string())) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| ConfigError {
                line: *line,
                message: format!("cannot parse `{v}` for [{section}] {key}"),
            }),
        }
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parse_with(section, key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        Ok(self.parse_with(section, key)?.unwrap_or(default))
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.parse_with(section, key)?.unwrap_or(default))
    }

    pub fn str_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> &'a str {
        self.get(section, key).unwrap_or(default)
    }

    pub fn flag_or(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(ConfigError {
                line: self.values[&(section.to_string(), key.to_string())].0,
                message: format!("cannot parse `{v}` as a flag"),
            }),
        }
    }

    /// Whitespace-separated list of integers (dyadic levels, replicate
    /// counts and the like).
    pub fn usize_list_or(
        &self,
        section: &str,
        key: &str,
        default: &[usize],
    ) -> Result<Vec<usize>, ConfigError> {
        match self.values.get(&(section.to_string(), key.to_string())) {
            None => Ok(default.to_vec()),
            Some((line, v)) => v
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|_| ConfigError {
                        line: *line,
                        message: format!("cannot parse `{tok}` in list for [{section}] {key}"),
                    })
                })
                .collect(),
        }
    }

    pub fn f64_list_or(
        &self,
        section: &str,
        key: &str,
        default: &[f64],
    ) -> Result<Vec<f64>, ConfigError> {
        match self.values.get(&(section.to_string(), key.to_string())) {
            None => Ok(default.to_vec()),
            Some((line, v)) => v
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| ConfigError {
                        line: *line,
                        message: format!("cannot parse `{tok}` in list for [{section}] {key}"),
                    })
                })
                .collect(),
        }
    }
}
