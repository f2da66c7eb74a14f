use std::fmt::Write as _;
use std::path::Path;

use sgp_core::gasket::vertex_count;
use sgp_core::{GasketGraph, VertexField};

use crate::error::{CliError, CliResult};

pub const HEADER: &str = "id\tword\tx\ty\tweight\tu\tv";

/// Per-vertex solution table. Floats are written in shortest round-trip
/// form, so reading a written table gives back identical values.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTable {
    pub level: usize,
    pub words: Vec<String>,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub u: VertexField,
    pub v: VertexField,
}

impl SolutionTable {
    pub fn new(g: &GasketGraph, u: &VertexField, v: &VertexField) -> CliResult<Self> {
        u.check_graph(g)?;
        v.check_graph(g)?;
        Ok(Self {
            level: g.level(),
            words: (0..g.num_vertices())
                .map(|k| g.generating_word(k).to_string())
                .collect(),
            points: g.vertices().to_vec(),
            weights: g.vertex_weight().to_vec(),
            u: u.clone(),
            v: v.clone(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(64 * self.words.len());
        s.push_str(HEADER);
        s.push('\n');
        for k in 0..self.words.len() {
            let [x, y] = self.points[k];
            writeln!(
                s,
                "{k}\t{}\t{x:?}\t{y:?}\t{:?}\t{:?}\t{:?}",
                self.words[k],
                self.weights[k],
                self.u.values()[k],
                self.v.values()[k]
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == HEADER => {}
            _ => return Err(format!("missing header {HEADER:?}")),
        }
        let mut words = Vec::new();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut u = Vec::new();
        let mut v = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = i + 2;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 7 {
                return Err(format!(
                    "line {row}: expected 7 columns, found {}",
                    cols.len()
                ));
            }
            let id: usize = cols[0]
                .parse()
                .map_err(|_| format!("line {row}: bad id {:?}", cols[0]))?;
            if id != words.len() {
                return Err(format!("line {row}: id {id} out of order"));
            }
            let num = |c: usize| -> Result<f64, String> {
                cols[c]
                    .parse::<f64>()
                    .map_err(|_| format!("line {row}: bad number {:?}", cols[c]))
            };
            words.push(cols[1].to_string());
            points.push([num(2)?, num(3)?]);
            weights.push(num(4)?);
            u.push(num(5)?);
            v.push(num(6)?);
        }
        let level = (0..=12)
            .find(|&m| vertex_count(m) == words.len())
            .ok_or_else(|| format!("{} rows is not a gasket vertex count", words.len()))?;
        Ok(Self {
            level,
            words,
            points,
            weights,
            u: VertexField::new(level, u).map_err(|e| e.to_string())?,
            v: VertexField::new(level, v).map_err(|e| e.to_string())?,
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|message| CliError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }
}
