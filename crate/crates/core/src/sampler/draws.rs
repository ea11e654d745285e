use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Post-warmup draws, stored chain-major: value `k` of iteration `i` in
/// chain `c` lives at `(c * iterations + i) * dim + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    /// `(block name, dimension)` in layout order.
    pub blocks: Vec<(String, usize)>,
    pub chains: usize,
    pub iterations: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub warmup: usize,
    /// Post-warmup acceptance rate per chain and component.
    pub acceptance: Vec<Vec<f64>>,
    /// Frozen proposal scales per chain and component (unconstrained scale).
    pub step_sizes: Vec<Vec<f64>>,
}

impl PosteriorDraws {
    /// Builds draws from `chains[c][i][k]`, e.g. for externally produced samples.
    pub fn from_chains(names: Vec<String>, chains: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_chains = chains.len();
        let iterations = chains.first().map_or(0, Vec::len);
        let dim = names.len();
        let mut values = Vec::with_capacity(n_chains * iterations * dim);
        for chain in &chains {
            if chain.len() != iterations {
                return Err(Error::InsufficientDraws("chains differ in length".into()));
            }
            for row in chain {
                if row.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
                }
                values.extend_from_slice(row);
            }
        }
        Ok(Self {
            blocks: names.iter().map(|n| (n.clone(), 1)).collect(),
            names,
            chains: n_chains,
            iterations,
            values,
            seed: 0,
            warmup: 0,
            acceptance: vec![vec![f64::NAN; dim]; n_chains],
            step_sizes: vec![vec![f64::NAN; dim]; n_chains],
        })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.iterations
    }

    #[inline]
    pub fn get(&self, chain: usize, iteration: usize, component: usize) -> f64 {
        self.values[(chain * self.iterations + iteration) * self.dim() + component]
    }

    /// Parameter vector of the `draw`-th draw, chains concatenated.
    pub fn draw(&self, draw: usize) -> &[f64] {
        let d = self.dim();
        &self.values[draw * d..(draw + 1) * d]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// First component index and dimension of a block.
    pub fn block(&self, name: &str) -> Result<(usize, usize)> {
        let mut offset = 0;
        for (b, dim) in &self.blocks {
            if b == name {
                return Ok((offset, *dim));
            }
            offset += dim;
        }
        Err(Error::UnknownParameter(name.to_string()))
    }

    /// All draws of one component, chains concatenated.
    pub fn column(&self, component: usize) -> Vec<f64> {
        let d = self.dim();
        self.values.iter().skip(component).step_by(d).copied().collect()
    }

    pub fn chain_column(&self, chain: usize, component: usize) -> Vec<f64> {
        (0..self.iterations).map(|i| self.get(chain, i, component)).collect()
    }

    pub fn chain_columns(&self, component: usize) -> Vec<Vec<f64>> {
        (0..self.chains).map(|c| self.chain_column(c, component)).collect()
    }

    pub fn named_column(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.column(self.index_of(name)?))
    }

    pub fn mean(&self, component: usize) -> f64 {
        crate::math::mean(&self.column(component))
    }

    pub fn means(&self) -> Vec<f64> {
        let d = self.dim();
        let mut sums = vec![0.0; d];
        for row in self.values.chunks(d) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let n = self.total_draws() as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Writes the columnar text export: a header `chain,iteration,<names>`
    /// followed by one row per draw. Floats use the shortest representation
    /// that round-trips exactly.
    pub fn write_columnar<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "chain,iteration")?;
        for n in &self.names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for c in 0..self.chains {
            for i in 0..self.iterations {
                write!(out, "{c},{i}")?;
                let base = (c * self.iterations + i) * self.dim();
                for v in &self.values[base..base + self.dim()] {
                    write!(out, ",{v:?}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    pub fn to_columnar_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_columnar(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads the columnar export back. Block structure, seed and sampler
    /// metadata are not part of the text format and come back empty.
    pub fn read_columnar<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Serialization("empty draws file".into()))?
            .map_err(|e| Error::Serialization(e.to_string()))?;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 3 || cols[0] != "chain" || cols[1] != "iteration" {
            return Err(Error::Serialization("draws header must start with chain,iteration".into()));
        }
        let names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
        let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Serialization(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() + 2 {
                return Err(Error::Serialization(format!("line {}: expected {} fields", lineno + 2, names.len() + 2)));
            }
            let parse_err = |f: &str| Error::Serialization(format!("line {}: bad number `{f}`", lineno + 2));
            let chain: usize = fields[0].parse().map_err(|_| parse_err(fields[0]))?;
            if chain >= chains.len() {
                chains.resize_with(chain + 1, Vec::new);
            }
            let row = fields[2..].iter().map(|f| f.parse::<f64>().map_err(|_| parse_err(f))).collect::<Result<Vec<f64>>>()?;
            chains[chain].push(row);
        }
        Self::from_chains(names, chains)
    }
}
