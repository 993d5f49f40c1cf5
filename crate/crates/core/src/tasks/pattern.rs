//! Pilot patterns and antenna selections, with their named presets and the
//! plain-text file format (`row col` per pilot, one antenna index per line
//! for selections; `#` starts a comment).

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Pilot positions on the `N_s x N_t` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPattern {
    mask: Array2<bool>,
    /// Row-major sorted `(subcarrier, antenna)` pilot positions.
    positions: Vec<(usize, usize)>,
}

impl PilotPattern {
    pub fn from_positions(n_s: usize, n_t: usize, positions: &[(usize, usize)]) -> Result<Self> {
        let mut mask = Array2::from_elem((n_s, n_t), false);
        for &(i, j) in positions {
            if i >= n_s || j >= n_t {
                return Err(Error::dim(format!(
                    "pilot ({i}, {j}) outside a {n_s}x{n_t} grid"
                )));
            }
            mask[(i, j)] = true;
        }
        Self::from_mask(mask)
    }

    pub fn from_mask(mask: Array2<bool>) -> Result<Self> {
        let positions: Vec<(usize, usize)> = mask
            .indexed_iter()
            .filter(|(_, &m)| m)
            .map(|(p, _)| p)
            .collect();
        if positions.is_empty() {
            return Err(Error::InvalidParameter("pilot pattern is empty".into()));
        }
        if let Some(j) = (0..mask.ncols()).find(|&j| !mask.column(j).iter().any(|&m| m)) {
            return Err(Error::InvalidParameter(format!("antenna {j} has no pilot")));
        }
        Ok(Self { mask, positions })
    }

    /// Comb patterns at the two densities of the reference setup:
    /// `A`/`B` use frequency spacing `N_s / 4`, `C`/`D` spacing `N_s / 8`
    /// (64 and 32 at 256 subcarriers, i.e. 128 and 256 pilots at 32 antennas).
    /// `A` and `C` put every antenna's comb at subcarrier 0; `B` and `D`
    /// stagger the comb by a quarter spacing per antenna.
    pub fn preset(name: &str, n_s: usize, n_t: usize) -> Result<Self> {
        let (div, staggered) = match name {
            "A" => (4, false),
            "B" => (4, true),
            "C" => (8, false),
            "D" => (8, true),
            other => {
                return Err(Error::Unknown {
                    kind: "pilot pattern",
                    name: other.to_string(),
                })
            }
        };
        if n_s % div != 0 || n_s < div {
            return Err(Error::dim(format!(
                "preset {name} needs N_s divisible by {div}, got {n_s}"
            )));
        }
        let spacing = n_s / div;
        let step = (spacing / 4).max(1);
        let mut mask = Array2::from_elem((n_s, n_t), false);
        for j in 0..n_t {
            let offset = if staggered { (j * step) % spacing } else { 0 };
            for i in (offset..n_s).step_by(spacing) {
                mask[(i, j)] = true;
            }
        }
        Self::from_mask(mask)
    }

    pub fn parse(text: &str, n_s: usize, n_t: usize) -> Result<Self> {
        let mut positions = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let nums: Vec<usize> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format("pattern file", format!("line {}: {e}", ln + 1)))?;
            match nums.as_slice() {
                [i, j] => positions.push((*i, *j)),
                _ => {
                    return Err(Error::format(
                        "pattern file",
                        format!("line {}: expected 'subcarrier antenna'", ln + 1),
                    ))
                }
            }
        }
        Self::from_positions(n_s, n_t, &positions)
    }

    /// Preset name or path to a pattern file.
    pub fn resolve(spec: &str, n_s: usize, n_t: usize) -> Result<Self> {
        match spec {
            "A" | "B" | "C" | "D" => Self::preset(spec, n_s, n_t),
            path => Self::parse(&std::fs::read_to_string(Path::new(path))?, n_s, n_t),
        }
    }

    pub fn to_text(&self) -> String {
        self.positions
            .iter()
            .map(|(i, j)| format!("{i} {j}\n"))
            .collect()
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn n_pilots(&self) -> usize {
        self.positions.len()
    }

    pub fn n_s(&self) -> usize {
        self.mask.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.mask.ncols()
    }

    pub fn is_pilot(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)]
    }

    /// Pilot subcarriers of antenna `j`, ascending.
    pub fn column_rows(&self, j: usize) -> Vec<usize> {
        (0..self.n_s()).filter(|&i| self.mask[(i, j)]).collect()
    }
}

/// Subset of base-station antennas whose CSI is observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntennaSelection {
    n_t: usize,
    selected: Vec<usize>,
}

impl AntennaSelection {
    pub fn new(n_t: usize, indices: &[usize]) -> Result<Self> {
        let mut selected = indices.to_vec();
        selected.sort_unstable();
        selected.dedup();
        if selected.len() != indices.len() {
            return Err(Error::InvalidParameter("duplicate antenna index".into()));
        }
        if selected.is_empty() {
            return Err(Error::InvalidParameter("no antennas selected".into()));
        }
        if let Some(&j) = selected.iter().find(|&&j| j >= n_t) {
            return Err(Error::dim(format!("antenna {j} outside an array of {n_t}")));
        }
        Ok(Self { n_t, selected })
    }

    /// `A`: odd-numbered antennas counting from one (indices 0, 2, 4, ...);
    /// `B`: even-numbered (1, 3, 5, ...). Both keep half of the array.
    pub fn preset(name: &str, n_t: usize) -> Result<Self> {
        let start = match name {
            "A" => 0,
            "B" => 1,
            other => {
                return Err(Error::Unknown {
                    kind: "antenna selection",
                    name: other.to_string(),
                })
            }
        };
        Self::new(n_t, &(start..n_t).step_by(2).collect::<Vec<_>>())
    }

    pub fn parse(text: &str, n_t: usize) -> Result<Self> {
        let mut idx = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            idx.push(line.parse().map_err(|e| {
                Error::format("selection file", format!("line {}: {e}", ln + 1))
            })?);
        }
        Self::new(n_t, &idx)
    }

    pub fn resolve(spec: &str, n_t: usize) -> Result<Self> {
        match spec {
            "A" | "B" => Self::preset(spec, n_t),
            path => Self::parse(&std::fs::read_to_string(Path::new(path))?, n_t),
        }
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn unselected(&self) -> Vec<usize> {
        (0..self.n_t).filter(|j| self.selected.binary_search(j).is_err()).collect()
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_selected(&self) -> usize {
        self.selected.len()
    }

    /// `N̄_t / N_t`.
    pub fn sampling_rate(&self) -> f64 {
        self.selected.len() as f64 / self.n_t as f64
    }
}
