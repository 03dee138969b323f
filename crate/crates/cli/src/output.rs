//! CSV files with a provenance header, and the policy table format.

use crate::CliError;
use fbctl_core::mdp::{Policy, StateGrid};
use std::fs;
use std::io::Write;
use std::path::Path;

/// First line of every CSV written by the tool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!("# fbctl config_hash={} seed={}", self.config_hash, self.seed)
    }

    pub fn parse(line: &str) -> Option<Self> {
        let rest = line.strip_prefix("# fbctl ")?;
        let mut hash = None;
        let mut seed = None;
        for kv in rest.split_whitespace() {
            match kv.split_once('=')? {
                ("config_hash", v) => hash = Some(v.to_string()),
                ("seed", v) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self {
            config_hash: hash?,
            seed: seed?,
        })
    }
}

/// Accumulates rows and writes them in one go.
pub struct Table {
    header: Vec<String>,
    comments: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            header: columns.iter().map(|s| s.to_string()).collect(),
            comments: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Extra `# ...` line written after the provenance line.
    pub fn comment(&mut self, text: impl Into<String>) {
        self.comments.push(text.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path, prov: &Provenance) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut buf = Vec::new();
        writeln!(buf, "{}", prov.line()).map_err(io)?;
        for c in &self.comments {
            writeln!(buf, "# {c}").map_err(io)?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
            w.write_record(&self.header).map_err(csv_err)?;
            for r in &self.rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
        fs::write(path, buf).map_err(io)
    }
}

/// Text form of a CSV field.
pub fn num(x: impl Field) -> String {
    x.field()
}

pub trait Field {
    fn field(&self) -> String;
}

impl Field for f64 {
    /// Shortest form that parses back to the same value, in exponent
    /// notation for very small or large magnitudes.
    fn field(&self) -> String {
        let a = self.abs();
        if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
            format!("{self:e}")
        } else {
            self.to_string()
        }
    }
}

macro_rules! display_field {
    ($($t:ty),*) => {
        $(impl Field for $t {
            fn field(&self) -> String {
                self.to_string()
            }
        })*
    };
}

display_field!(usize, u32, u64, bool);

pub const POLICY_COLUMNS: [&str; 6] = ["g_index", "d_index", "g_point", "d_point", "bits", "value"];

/// Writes a policy table with its grid points and (optionally) values.
pub fn write_policy(
    path: &Path,
    prov: &Provenance,
    policy: &Policy,
    grid: &StateGrid,
    values: Option<&[Vec<f64>]>,
) -> Result<(), CliError> {
    let mut t = Table::new(&POLICY_COLUMNS);
    t.comment(format!("lambda={} avg_rate={}", policy.lambda, policy.avg_rate));
    for m in 0..policy.rows() {
        for n in 0..policy.cols() {
            t.push(vec![
                num(m),
                num(n),
                num(grid.g_points[m]),
                num(grid.d_points[n]),
                num(policy.get(m, n)),
                values.map_or_else(String::new, |v| num(v[m][n])),
            ]);
        }
    }
    t.write(path, prov)
}

/// Reads a policy written by [`write_policy`].
pub fn read_policy(path: &Path) -> Result<(Provenance, Policy), CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut lines = text.lines();
    let prov = lines
        .next()
        .and_then(Provenance::parse)
        .ok_or_else(|| bad("missing provenance line".into()))?;
    let (mut lambda, mut avg_rate) = (None, None);
    let mut body = String::new();
    for line in lines {
        if let Some(c) = line.strip_prefix("# ") {
            for kv in c.split_whitespace() {
                match kv.split_once('=') {
                    Some(("lambda", v)) => lambda = v.parse::<f64>().ok(),
                    Some(("avg_rate", v)) => avg_rate = v.parse::<f64>().ok(),
                    _ => {}
                }
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(POLICY_COLUMNS) {
        return Err(bad(format!("unexpected columns {header:?}")));
    }
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse = |i: usize| -> Result<usize, CliError> {
            field(i).parse().map_err(|_| bad(format!("bad integer {:?}", field(i))))
        };
        entries.push((parse(0)?, parse(1)?, parse(4)? as u32));
    }
    let rows = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let cols = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    if entries.len() != rows * cols {
        return Err(bad("policy table is incomplete".into()));
    }
    let mut policy = Policy::zeros(rows, cols);
    for (m, n, b) in entries {
        policy.table[m][n] = b;
    }
    policy.lambda = lambda.ok_or_else(|| bad("missing lambda".into()))?;
    policy.avg_rate = avg_rate.ok_or_else(|| bad("missing avg_rate".into()))?;
    Ok((prov, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fbctl_core::quantizer::{QuantizerKind, QuantizerModel};

    #[test]
    fn provenance_line_parses_back() {
        let p = Provenance {
            config_hash: "abc123".into(),
            seed: 42,
        };
        assert_eq!(Provenance::parse(&p.line()), Some(p));
        assert_eq!(Provenance::parse("g_index,d_index"), None);
    }

    #[test]
    fn policy_round_trips_through_csv() {
        let model = QuantizerModel::new(QuantizerKind::SphereCap, 4).unwrap();
        let grid = StateGrid::build(4, &[0, 2, 4, 8], 3, &model).unwrap();
        let mut policy = Policy::zeros(3, 4);
        policy.table = vec![vec![0, 0, 2, 8], vec![0, 2, 4, 8], vec![0, 4, 4, 8]];
        policy.lambda = 0.1 + 0.2;
        policy.avg_rate = 1.0 / 3.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let prov = Provenance {
            config_hash: "00ff".into(),
            seed: 7,
        };
        let values = vec![vec![0.5; 4]; 3];
        write_policy(&path, &prov, &policy, &grid, Some(&values)).unwrap();
        let (p2, back) = read_policy(&path).unwrap();
        assert_eq!(p2, prov);
        assert_eq!(back, policy);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0 / 3.0, 3.6e-32, -2.5e-7, 12.0, 6.02e23, f64::INFINITY] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(3.6e-32), "3.6e-32");
        assert_eq!(num(12.0), "12");
    }

    #[test]
    fn truncated_policy_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        fs::write(
            &path,
            "# fbctl config_hash=aa seed=1\n# lambda=0 avg_rate=0\ng_index,d_index,g_point,d_point,bits,value\n0,0,1,0.1,0,\n1,1,2,0.2,2,\n",
        )
        .unwrap();
        assert!(read_policy(&path).is_err());
    }
}
