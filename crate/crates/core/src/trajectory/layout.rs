use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::ellipse::ELLIPSE_PARAMS;
use super::fourier::FourierCurve;
use crate::error::{HarvestError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ellipse,
    Fourier,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Ellipse => "ellipse",
            Family::Fourier => "fourier",
        })
    }
}

/// Named trajectory parameter. Harmonic indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamName {
    CenterX,
    CenterY,
    SemiMajor,
    SemiMinor,
    Orientation,
    FreqX,
    AmpX(usize),
    AmpY(usize),
    PhaseX(usize),
    PhaseY(usize),
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamName::CenterX => write!(f, "A"),
            ParamName::CenterY => write!(f, "B"),
            ParamName::SemiMajor => write!(f, "a"),
            ParamName::SemiMinor => write!(f, "b"),
            ParamName::Orientation => write!(f, "phi"),
            ParamName::FreqX => write!(f, "fx"),
            ParamName::AmpX(n) => write!(f, "ax{n}"),
            ParamName::AmpY(n) => write!(f, "by{n}"),
            ParamName::PhaseX(n) => write!(f, "phix{n}"),
            ParamName::PhaseY(n) => write!(f, "phiy{n}"),
        }
    }
}

/// Step-size group of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Length,
    Angle,
    Frequency,
}

impl ParamName {
    pub fn group(&self) -> ParamGroup {
        match self {
            ParamName::Orientation | ParamName::PhaseX(_) | ParamName::PhaseY(_) => {
                ParamGroup::Angle
            }
            ParamName::FreqX => ParamGroup::Frequency,
            _ => ParamGroup::Length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamKey {
    pub agent: usize,
    pub segment: usize,
    pub name: ParamName,
}

/// Map between flat parameter indices and named parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub family: Family,
    pub keys: Vec<ParamKey>,
    offsets: Vec<usize>,
    /// Ellipses per agent (all ones for Fourier curves).
    pub segments: Vec<usize>,
    /// `(Γx, Γy)` for Fourier curves.
    pub harmonics: (usize, usize),
}

impl ParamLayout {
    /// `A, B, a, b, φ` for each segment of each agent.
    pub fn ellipse(segments: &[usize]) -> Self {
        let mut keys = Vec::new();
        let mut offsets = vec![0];
        for (agent, &e) in segments.iter().enumerate() {
            for segment in 0..e {
                for name in [
                    ParamName::CenterX,
                    ParamName::CenterY,
                    ParamName::SemiMajor,
                    ParamName::SemiMinor,
                    ParamName::Orientation,
                ] {
                    keys.push(ParamKey {
                        agent,
                        segment,
                        name,
                    });
                }
            }
            offsets.push(keys.len());
        }
        ParamLayout {
            family: Family::Ellipse,
            keys,
            offsets,
            segments: segments.to_vec(),
            harmonics: (0, 0),
        }
    }

    /// `f_x, a_1..a_Γx, b_1..b_Γy, φ^x_1..φ^x_Γx, φ^y_1..φ^y_Γy` per agent.
    pub fn fourier(agents: usize, gx: usize, gy: usize) -> Self {
        let mut keys = Vec::new();
        let mut offsets = vec![0];
        for agent in 0..agents {
            let mut push = |name| {
                keys.push(ParamKey {
                    agent,
                    segment: 0,
                    name,
                })
            };
            push(ParamName::FreqX);
            (1..=gx).for_each(|n| push(ParamName::AmpX(n)));
            (1..=gy).for_each(|n| push(ParamName::AmpY(n)));
            (1..=gx).for_each(|n| push(ParamName::PhaseX(n)));
            (1..=gy).for_each(|n| push(ParamName::PhaseY(n)));
            offsets.push(keys.len());
        }
        debug_assert_eq!(keys.len(), agents * FourierCurve::param_count_for(gx, gy));
        ParamLayout {
            family: Family::Fourier,
            keys,
            offsets,
            segments: vec![1; agents],
            harmonics: (gx, gy),
        }
    }

    pub fn dim(&self) -> usize {
        self.keys.len()
    }

    pub fn agents(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Flat indices of agent `j`'s parameters.
    pub fn agent_range(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn index(&self, key: ParamKey) -> Option<usize> {
        self.keys.iter().position(|k| *k == key)
    }

    /// Flat index of parameter `name` of segment `seg` of agent `j`.
    pub fn ellipse_index(&self, j: usize, seg: usize) -> usize {
        self.offsets[j] + seg * ELLIPSE_PARAMS
    }

    /// Human-readable label such as `j0.s1.phi`.
    pub fn label(&self, k: usize) -> String {
        let key = self.keys[k];
        match self.family {
            Family::Ellipse => format!("j{}.s{}.{}", key.agent, key.segment, key.name),
            Family::Fourier => format!("j{}.{}", key.agent, key.name),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.dim()).map(|k| self.label(k)).collect()
    }
}

/// Flat parameter vector `Θ` with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

/// JSON form of a parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    pub family: Family,
    pub agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonics: Option<[usize; 2]>,
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(HarvestError::param(
                "theta",
                format!("has {} values, layout needs {}", values.len(), layout.dim()),
            ));
        }
        Ok(ParamVector { layout, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn to_file(&self) -> ParamFile {
        let l = &self.layout;
        ParamFile {
            family: l.family,
            agents: l.agents(),
            segments: (l.family == Family::Ellipse).then(|| l.segments.clone()),
            harmonics: (l.family == Family::Fourier).then_some([l.harmonics.0, l.harmonics.1]),
            labels: l.labels(),
            values: self.values.clone(),
        }
    }

    pub fn from_file(file: ParamFile) -> Result<Self> {
        let layout = match file.family {
            Family::Ellipse => {
                let segs = file.segments.unwrap_or_else(|| vec![1; file.agents]);
                if segs.len() != file.agents || segs.iter().any(|&e| e == 0) {
                    return Err(HarvestError::param(
                        "segments",
                        "needs one positive count per agent",
                    ));
                }
                ParamLayout::ellipse(&segs)
            }
            Family::Fourier => {
                let [gx, gy] = file
                    .harmonics
                    .ok_or_else(|| HarvestError::param("harmonics", "required for fourier"))?;
                ParamLayout::fourier(file.agents, gx, gy)
            }
        };
        if !file.labels.is_empty() && file.labels != layout.labels() {
            return Err(HarvestError::param(
                "labels",
                "do not match the layout implied by family/agents/segments/harmonics",
            ));
        }
        ParamVector::new(layout, file.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_layout_size() {
        let l = ParamLayout::fourier(2, 3, 3);
        assert_eq!(l.dim(), 26);
        assert_eq!(l.agent_range(1), 13..26);
        assert_eq!(l.label(14), "j1.ax1");
    }

    #[test]
    fn ellipse_layout_is_bijective() {
        let l = ParamLayout::ellipse(&[2, 1]);
        assert_eq!(l.dim(), 15);
        for k in 0..l.dim() {
            assert_eq!(l.index(l.keys[k]), Some(k));
        }
        assert_eq!(l.ellipse_index(1, 0), 10);
    }

    #[test]
    fn file_round_trip() {
        let p = ParamVector::new(ParamLayout::ellipse(&[1, 2]), (0..15).map(f64::from).collect())
            .unwrap();
        let text = serde_json::to_string(&p.to_file()).unwrap();
        let back = ParamVector::from_file(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
