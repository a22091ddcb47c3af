//! Flat `key = value` experiment configs.
//!
//! ```text
//! # comment
//! seed = 7            # keys before any header belong to [run]
//! [axioms]
//! structure = euclidean:k=2
//! ladder = dyadic:1,20
//! ```
//!
//! A file may hold sections for several kinds; only the requested one runs,
//! but every section is validated.

use crate::error::CliError;
use dilatlab::limit::Ladder;
use dilatlab::dilation::DilatationStructure;
use dilatlab::Point;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Metric,
    Groupoid,
    Gh,
    Length,
    Axioms,
    Tangent,
    Profile,
    Rnp,
    Tempered,
    Gamma,
    Equivalence,
}

impl Kind {
    pub const ALL: [Kind; 11] = [
        Kind::Metric,
        Kind::Groupoid,
        Kind::Gh,
        Kind::Length,
        Kind::Axioms,
        Kind::Tangent,
        Kind::Profile,
        Kind::Rnp,
        Kind::Tempered,
        Kind::Gamma,
        Kind::Equivalence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Metric => "metric",
            Kind::Groupoid => "groupoid",
            Kind::Gh => "gh",
            Kind::Length => "length",
            Kind::Axioms => "axioms",
            Kind::Tangent => "tangent",
            Kind::Profile => "profile",
            Kind::Rnp => "rnp",
            Kind::Tempered => "tempered",
            Kind::Gamma => "gamma",
            Kind::Equivalence => "equivalence",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Keys accepted in this kind's section.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Kind::Metric => &["matrix", "structure", "points", "tol", "witness_cap"],
            Kind::Groupoid => &["matrix", "structure", "points", "tol", "group", "triples", "word_len"],
            Kind::Gh => &["a", "b", "mode", "steps", "exact_cap", "max_mu"],
            Kind::Length => &[
                "structure", "curve", "from", "to", "region", "nodes", "restarts", "sweeps", "md_cells",
                "md_tolerance", "formula", "formula_tolerance", "ladder",
            ],
            Kind::Axioms => &["structure", "base", "radius", "per_axis", "ladder", "axioms"],
            Kind::Tangent => &["structure", "base", "ladder", "per_axis", "mu", "profile_ladder", "cone"],
            Kind::Profile => &["structure", "space", "base", "eps", "mu", "b", "cone_scales"],
            Kind::Rnp => &["structure", "battery", "probes", "tolerance", "ladder", "oscillation"],
            Kind::Tempered => &["structure", "distance", "distance_scale", "base", "radius", "per_axis", "ladder", "margin"],
            Kind::Gamma => &["structure", "base", "battery", "eps", "tolerance", "amplitude", "frequency", "ladder"],
            Kind::Equivalence => &["structure", "other", "base", "radius", "per_axis", "ladder"],
        }
    }
}

const RUN_KEYS: &[&str] = &["seed"];

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub value: String,
}

/// The keys of one section with their line numbers.
#[derive(Debug, Clone, Default)]
pub struct Section {
    pub entries: BTreeMap<String, Entry>,
    /// Directory that relative paths resolve against.
    pub dir: PathBuf,
    /// Line of the section header, for errors about missing keys.
    pub header_line: usize,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub run: Section,
    pub sections: BTreeMap<Kind, Section>,
}

fn err(line: usize, key: Option<&str>, msg: impl Into<String>) -> CliError {
    CliError::Config {
        line,
        key: key.map(str::to_string),
        msg: msg.into(),
    }
}

impl Config {
    pub fn parse(text: &str, dir: &Path) -> Result<Config, CliError> {
        let mut run = Section {
            dir: dir.to_path_buf(),
            ..Default::default()
        };
        let mut sections: BTreeMap<Kind, Section> = BTreeMap::new();
        let mut current: Option<Kind> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, None, "unterminated section header"))?
                    .trim();
                if name == "run" {
                    current = None;
                    continue;
                }
                let kind = Kind::parse(name).ok_or_else(|| err(line, None, format!("unknown section `[{name}]`")))?;
                if sections.contains_key(&kind) {
                    return Err(err(line, None, format!("duplicate section `[{name}]`")));
                }
                sections.insert(
                    kind,
                    Section {
                        dir: dir.to_path_buf(),
                        header_line: line,
                        ..Default::default()
                    },
                );
                current = Some(kind);
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err(line, None, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let (section, allowed, name) = match current {
                None => (&mut run, RUN_KEYS, "run"),
                Some(k) => (sections.get_mut(&k).unwrap(), k.keys(), k.as_str()),
            };
            if !allowed.contains(&key) {
                return Err(err(line, Some(key), format!("unknown key in [{name}]")));
            }
            if value.is_empty() {
                return Err(err(line, Some(key), "empty value"));
            }
            if section.entries.contains_key(key) {
                return Err(err(line, Some(key), "key given twice"));
            }
            section.entries.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.to_string(),
                },
            );
        }
        Ok(Config { run, sections })
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn seed(&self) -> Result<Option<u64>, CliError> {
        self.run.opt("seed", |v| v.parse::<u64>().map_err(|_| "expected a nonnegative integer".to_string()))
    }

    pub fn section(&self, kind: Kind) -> Result<&Section, CliError> {
        self.sections
            .get(&kind)
            .ok_or_else(|| err(0, None, format!("config has no [{}] section", kind.as_str())))
    }
}

impl Section {
    /// Parse `key` with `f` when present, pointing errors at its line.
    pub fn opt<T>(&self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, CliError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => f(&e.value).map(Some).map_err(|m| err(e.line, Some(key), m)),
        }
    }

    pub fn get<T>(&self, key: &str, default: T, f: impl FnOnce(&str) -> Result<T, String>) -> Result<T, CliError> {
        Ok(self.opt(key, f)?.unwrap_or(default))
    }

    pub fn required<T>(&self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<T, CliError> {
        self.opt(key, f)?
            .ok_or_else(|| err(self.header_line, Some(key), "required key is missing"))
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        self.get(key, default, parse_f64)
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, CliError> {
        self.get(key, default, |v| v.parse().map_err(|_| "expected a nonnegative integer".into()))
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool, CliError> {
        self.get(key, default, |v| match v {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err("expected true or false".into()),
        })
    }

    pub fn structure(&self, key: &str, default: &str) -> Result<DilatationStructure, CliError> {
        let (line, spec) = match self.entries.get(key) {
            Some(e) => (e.line, e.value.as_str()),
            None => (self.header_line, default),
        };
        DilatationStructure::parse(spec).map_err(|e| err(line, Some(key), e.to_string()))
    }

    pub fn point(&self, key: &str, dim: usize) -> Result<Option<Point>, CliError> {
        self.opt(key, |v| {
            let p = parse_point(v)?;
            if p.dim() != dim {
                return Err(format!("expected {dim} coordinates, got {}", p.dim()));
            }
            Ok(p)
        })
    }

    pub fn ladder(&self, key: &str, default: Ladder) -> Result<Ladder, CliError> {
        self.get(key, default, parse_ladder)
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        self.opt(key, |v| Ok(self.dir.join(v)))
    }

    /// Echo of the section for reports.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }
}

pub fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("`{v}` is not a finite number"))
}

/// Comma-separated coordinates.
pub fn parse_point(v: &str) -> Result<Point, String> {
    let coords = v.split(',').map(|c| parse_f64(c.trim())).collect::<Result<Vec<_>, _>>()?;
    Ok(Point::from(coords))
}

/// `dyadic:<kmin>,<kmax>` or `list:<eps>,<eps>,...`.
pub fn parse_ladder(v: &str) -> Result<Ladder, String> {
    let (kind, rest) = v.split_once(':').ok_or("expected dyadic:<kmin>,<kmax> or list:<eps>,...")?;
    match kind.trim() {
        "dyadic" => {
            let (a, b) = rest.split_once(',').ok_or("expected dyadic:<kmin>,<kmax>")?;
            let a: i32 = a.trim().parse().map_err(|_| format!("bad exponent `{}`", a.trim()))?;
            let b: i32 = b.trim().parse().map_err(|_| format!("bad exponent `{}`", b.trim()))?;
            if !(0..=60).contains(&a) || !(a..=60).contains(&b) || b - a < 1 {
                return Err("need 0 ≤ kmin < kmax ≤ 60".into());
            }
            Ok(Ladder::dyadic(a, b))
        }
        "list" => {
            let scales = rest.split(',').map(|s| parse_f64(s.trim())).collect::<Result<Vec<_>, _>>()?;
            Ladder::new(scales).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown ladder `{other}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, CliError> {
        Config::parse(text, Path::new("."))
    }

    #[test]
    fn sections_and_run_keys() {
        let c = parse("seed = 4\n[axioms]\nstructure = euclidean:k=2 # plane\n\n[rnp]\nprobes=8\n").unwrap();
        assert_eq!(c.seed().unwrap(), Some(4));
        let s = c.section(Kind::Axioms).unwrap();
        assert_eq!(s.entries["structure"].value, "euclidean:k=2");
        assert_eq!(s.entries["structure"].line, 3);
        assert_eq!(c.section(Kind::Rnp).unwrap().usize("probes", 64).unwrap(), 8);
        assert!(c.section(Kind::Gh).is_err());
    }

    #[test]
    fn rejections_point_at_the_line() {
        for (text, line) in [
            ("[axioms]\nstructure = euclidean\nbogus = 1", 3),
            ("colour = red", 1),
            ("[nonsense]", 1),
            ("[axioms]\n[axioms]", 2),
            ("[axioms]\nstructure", 2),
            ("[axioms]\nladder = dyadic:1,1\nladder = dyadic:1,2", 3),
            ("[axioms\n", 1),
        ] {
            match parse(text) {
                Err(CliError::Config { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn typed_values() {
        let c = parse("[axioms]\nstructure = unknown:foo\nbase = 1,2\nladder = dyadic:2,5\nradius = x\n").unwrap();
        let s = c.section(Kind::Axioms).unwrap();
        let e = s.structure("structure", "euclidean").unwrap_err();
        assert!(e.to_string().contains("unknown structure"), "{e}");
        assert!(e.to_string().contains("line 2"));
        assert_eq!(s.point("base", 2).unwrap(), Some(Point::new([1.0, 2.0])));
        assert!(s.point("base", 3).is_err());
        assert_eq!(s.ladder("ladder", Ladder::default()).unwrap().len(), 4);
        assert!(matches!(s.f64("radius", 1.0), Err(CliError::Config { line: 5, .. })));
        assert!(parse_ladder("list:0.5,0.25").is_ok());
        assert!(parse_ladder("dyadic:5,2").is_err());
    }
}
