//! Flat `key = value` configuration with one section per subcommand, merged
//! with command-line flags into a fully resolved parameter map.

use std::collections::BTreeMap;

use elhom_core::Mat;

use crate::CliError;

#[derive(Clone, Copy, Debug)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

pub const GLOBAL_KEYS: &[Key] = &[
    key("output_dir", "out", "directory receiving the JSON and CSV reports"),
    key("seed", "0", "seed for every random start and sample"),
    key("threads", "1", "worker threads (falls back to ELHOM_THREADS)"),
    key("tol", "1e-8", "relative gradient tolerance of the solvers"),
    key("max_iter", "5000", "iteration cap of the solvers"),
];

const BASE: Key = key("base", "stvk", "base energy: dist2 or stvk");
const MICRO: Key = key("microstructure", "homogeneous", "homogeneous, layered or prestressed");
const ALPHA: Key = key("alpha", "0.5", "soft-phase stiffness of the layered composite");
const S: Key = key("s", "0.1", "prestrain of the cylinder");
const RHO: Key = key("rho", "0.15", "cylinder radius");
const DIM: Key = key("dim", "auto", "space dimension: 2, 3 or auto");

pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: Vec<Key>,
    /// Accepts `--density` as a shorthand for base or microstructure.
    pub density: bool,
}

fn density_keys() -> Vec<Key> {
    vec![BASE, MICRO, ALPHA, S, RHO, DIM]
}

fn with_density(extra: &[Key]) -> Vec<Key> {
    let mut keys = density_keys();
    keys.extend_from_slice(extra);
    keys
}

pub fn commands() -> Vec<CommandSpec> {
    vec![
        CommandSpec {
            name: "validate",
            about: "Check the growth, natural-state, non-degeneracy and expansion conditions",
            keys: with_density(&[key("samples", "200", "random samples per condition")]),
            density: true,
        },
        CommandSpec {
            name: "homogenize",
            about: "k-cell homogenized energies W^(k)_hom(F) and their running minimum",
            keys: with_density(&[
                key("F", "id", "macroscopic deformation gradient"),
                key("k", "1", "comma-separated cell sizes"),
                key("res", "16", "grid nodes per unit length (even)"),
                key("random_starts", "3", "random smooth starts per cell"),
                key("amplitude", "0.01", "max-norm of the random starts"),
                key("bending", "true", "add the bending ansatz for compressions diag(1-d, 1)"),
            ]),
            density: true,
        },
        CommandSpec {
            name: "quad-homogenize",
            about: "Homogenized tensor of the quadratic expansion at the identity",
            keys: with_density(&[key("res", "32", "grid nodes per unit length (even)")]),
            density: true,
        },
        CommandSpec {
            name: "expand",
            about: "Residuals |W^(k)_hom(Id+hG) - h^2 Q_hom(G)|/h^2 over shrinking h",
            keys: with_density(&[
                key("G", "e1e1", "perturbation direction (rescaled to unit norm)"),
                key("k", "1", "cell size"),
                key("h", "0.1,0.05,0.025", "strictly decreasing perturbation sizes"),
                key("res", "16", "grid nodes per unit length (even)"),
            ]),
            density: true,
        },
        CommandSpec {
            name: "diagram",
            about: "Both paths of the linearization/homogenization diagram on the unit box",
            keys: with_density(&[
                key("eps", "0.5,0.25", "microstructure periods, each 1/m"),
                key("h", "0.1,0.05", "linearization parameters"),
                key("cell_res", "16", "elements per period"),
                key("load", "lift", "lift, body or none"),
                key("load_scale", "0.05", "magnitude of the lift or body force"),
            ]),
            density: true,
        },
        CommandSpec {
            name: "counterexample1",
            about: "Compressions of the stiff/soft dist2 laminate and the bending gap",
            keys: vec![
                key("alpha", "0.001", "soft-phase stiffness"),
                key("delta", "0.1,0.2", "compressions in (0, 0.3]"),
                key("k", "1,2,4,8", "cell sizes"),
                key("res", "16", "grid nodes per unit length (even)"),
                key("random_starts", "3", "random smooth starts per cell"),
                key("amplitude", "0.01", "max-norm of the random starts"),
            ],
            density: false,
        },
        CommandSpec {
            name: "counterexample2",
            about: "Commutativity verdict for the prestressed perforated composite",
            keys: vec![
                BASE,
                S,
                RHO,
                key("G", "-e2e2", "perturbation direction"),
                key("k", "1,2", "cell sizes"),
                key("h", "0.1,0.05,0.025", "strictly decreasing perturbation sizes (at least 3)"),
                key("res", "10", "grid nodes per unit length (even)"),
                key("random_starts", "1", "random smooth starts per cell"),
                key("amplitude", "0.01", "max-norm of the random starts"),
            ],
            density: false,
        },
        CommandSpec {
            name: "splitting",
            about: "Full k-cell energy against the sum of slab and cylinder energies",
            keys: vec![
                BASE,
                S,
                RHO,
                key("k", "1", "cell size"),
                key("res", "10", "grid nodes per unit length (even)"),
                key("samples", "2", "random matrices near Id tested besides Id"),
                key("random_starts", "0", "random smooth starts per cell"),
                key("amplitude", "0.01", "max-norm of the random starts"),
            ],
            density: false,
        },
    ]
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Sections of a configuration file: section name → ordered (key, value, line).
pub type FileEntries = BTreeMap<String, Vec<(String, String, usize)>>;

pub fn parse_file(text: &str) -> Result<FileEntries, CliError> {
    let mut out: FileEntries = BTreeMap::new();
    let mut section = "global".to_string();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::Config(format!("line {}: unterminated section header", i + 1)))?;
            section = name.trim().to_string();
            out.entry(section.clone()).or_default();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_string();
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", i + 1)));
        }
        out.entry(section.clone()).or_default().push((k, v.trim().to_string(), i + 1));
    }
    let specs = commands();
    for (sec, entries) in &out {
        let allowed: Vec<&str> = if sec == "global" {
            GLOBAL_KEYS.iter().map(|k| k.name).collect()
        } else {
            let spec = specs
                .iter()
                .find(|c| c.name == sec)
                .ok_or_else(|| CliError::Config(format!("unknown section [{sec}]")))?;
            let mut names: Vec<&str> = spec.keys.iter().map(|k| k.name).collect();
            if spec.density {
                names.push("density");
            }
            names
        };
        for (k, _, line) in entries {
            if !allowed.contains(&k.as_str()) {
                return Err(CliError::Config(format!("line {line}: unknown key '{k}' in section [{sec}]")));
            }
        }
    }
    Ok(out)
}

/// Fully resolved parameters of one run.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub command: String,
    pub values: BTreeMap<String, String>,
}

/// Writes `density = x` into base or microstructure.
fn set_value(values: &mut BTreeMap<String, String>, k: &str, v: &str) -> Result<(), CliError> {
    if k == "density" {
        match v {
            "dist2" | "stvk" => values.insert("base".into(), v.into()),
            "homogeneous" | "layered" | "prestressed" => values.insert("microstructure".into(), v.into()),
            _ => return Err(CliError::Config(format!("unknown density '{v}'"))),
        };
    } else {
        values.insert(k.to_string(), v.to_string());
    }
    Ok(())
}

/// Precedence: flag, then configuration file, then ELHOM_THREADS (threads only), then default.
pub fn resolve(
    spec: &CommandSpec,
    file: Option<&FileEntries>,
    flags: &[(String, String)],
    env_threads: Option<String>,
) -> Result<Resolved, CliError> {
    let mut values = BTreeMap::new();
    for k in GLOBAL_KEYS.iter().chain(spec.keys.iter()) {
        values.insert(k.name.to_string(), k.default.to_string());
    }
    if let Some(t) = env_threads {
        values.insert("threads".into(), t);
    }
    if let Some(file) = file {
        for sec in ["global", spec.name] {
            for (k, v, _) in file.get(sec).into_iter().flatten() {
                set_value(&mut values, k, v)?;
            }
        }
    }
    for (k, v) in flags {
        set_value(&mut values, k, v)?;
    }
    Ok(Resolved { command: spec.name.to_string(), values })
}

impl Resolved {
    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn bad(&self, key: &str, what: &str) -> CliError {
        CliError::Config(format!("{key} = '{}': {what}", self.str(key)))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.str(key).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.bad(key, "expected a number"))
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.str(key).parse().map_err(|_| self.bad(key, "expected a nonnegative integer"))
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.str(key).parse().map_err(|_| self.bad(key, "expected a nonnegative integer"))
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.str(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.bad(key, "expected true or false")),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let out: Option<Vec<f64>> =
            self.str(key).split(',').map(|p| p.trim().parse::<f64>().ok().filter(|v| v.is_finite())).collect();
        out.filter(|v| !v.is_empty()).ok_or_else(|| self.bad(key, "expected comma-separated numbers"))
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        let out: Option<Vec<usize>> = self.str(key).split(',').map(|p| p.trim().parse().ok()).collect();
        out.filter(|v| !v.is_empty()).ok_or_else(|| self.bad(key, "expected comma-separated integers"))
    }

    pub fn mat(&self, key: &str, dim: usize) -> Result<Mat, CliError> {
        parse_matrix(self.str(key), dim).map_err(|e| self.bad(key, &e))
    }
}

/// Row-major entries `a,b,c,d`, or a named shorthand (id, e1e1, e2e2, e1e2,
/// sym-shear, ...) with optional leading minus sign.
pub fn parse_matrix(text: &str, dim: usize) -> Result<Mat, String> {
    let text = text.trim();
    if text.contains(',') {
        let entries: Option<Vec<f64>> = text.split(',').map(|p| p.trim().parse().ok()).collect();
        let entries = entries.ok_or("entries must be numbers")?;
        return Mat::from_row_major(dim, &entries).map_err(|e| e.to_string());
    }
    let (sign, name) = match text.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, text),
    };
    let m = match name {
        "id" => Mat::identity(dim),
        "zero" => Mat::zeros(dim),
        "sym-shear" => Mat::unit(dim, 0, 1) + Mat::unit(dim, 1, 0),
        _ => {
            let b = name.as_bytes();
            let digit = |c: u8| (c as char).to_digit(10).map(|d| d as usize);
            match (b.len(), b.first(), b.get(2)) {
                (4, Some(b'e'), Some(b'e')) => match (digit(b[1]), digit(b[3])) {
                    (Some(i), Some(j)) if (1..=dim).contains(&i) && (1..=dim).contains(&j) => Mat::unit(dim, i - 1, j - 1),
                    _ => return Err(format!("no basis matrix '{name}' in dimension {dim}")),
                },
                _ => return Err("expected row-major entries or one of id, zero, sym-shear, eiej".into()),
            }
        }
    };
    Ok(m * sign)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthands() {
        assert_eq!(parse_matrix("id", 2).unwrap(), Mat::identity(2));
        assert_eq!(parse_matrix("-e2e2", 3).unwrap(), Mat::unit(3, 1, 1) * -1.0);
        assert_eq!(parse_matrix("0.8,0,0,1", 2).unwrap(), Mat::diag(&[0.8, 1.0]));
        assert!(parse_matrix("e3e3", 2).is_err());
        assert!(parse_matrix("1,2,3", 2).is_err());
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(parse_file("[validate]\nalpha = 0.5\n").is_ok());
        assert!(parse_file("[validate]\nalhpa = 0.5\n").is_err());
        assert!(parse_file("[nosuch]\n").is_err());
        assert!(parse_file("seed = 3\nbogus = 1\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let spec = commands().into_iter().find(|c| c.name == "validate").unwrap();
        let file = parse_file("seed = 4\n[validate]\nalpha = 0.25\ndensity = layered\n").unwrap();
        let flags = vec![("alpha".to_string(), "0.75".to_string())];
        let r = resolve(&spec, Some(&file), &flags, None).unwrap();
        assert_eq!(r.str("alpha"), "0.75");
        assert_eq!(r.str("seed"), "4");
        assert_eq!(r.str("microstructure"), "layered");
    }
}
