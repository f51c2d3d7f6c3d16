use super::{check_finite, DenseMap};
use crate::error::{Error, Result};
use crate::Pixel;

/// What to do with a query that falls outside `[0, W-1] x [0, H-1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderPolicy {
    /// Report the sample as invalid.
    #[default]
    Invalid,
    /// Clamp the coordinate onto the grid before sampling.
    Clamp,
}

/// Result of a batch of bilinear lookups. `values` holds `channels` entries
/// per query; invalid queries are zero-filled.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub channels: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Samples {
    pub fn value(&self, query: usize) -> Option<&[f64]> {
        self.valid[query].then(|| &self.values[query * self.channels..(query + 1) * self.channels])
    }
}

/// The 2x2 neighbourhood and weights of a bilinear lookup.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    row0: usize,
    col0: usize,
    row1: usize,
    col1: usize,
    fx: f64,
    fy: f64,
}

impl Stencil {
    /// `None` when `(x, y)` is outside the grid.
    pub(crate) fn new(x: f64, y: f64, width: usize, height: usize) -> Option<Self> {
        if width == 0 || height == 0 {
            return None;
        }
        let (w1, h1) = ((width - 1) as f64, (height - 1) as f64);
        if !(0.0..=w1).contains(&x) || !(0.0..=h1).contains(&y) {
            return None;
        }
        let (col0, col1, fx) = axis(x, width);
        let (row0, row1, fy) = axis(y, height);
        Some(Self {
            row0,
            col0,
            row1,
            col1,
            fx,
            fy,
        })
    }

    pub(crate) fn taps(&self) -> [(usize, usize, f64); 4] {
        let (fx, fy) = (self.fx, self.fy);
        [
            (self.row0, self.col0, (1.0 - fx) * (1.0 - fy)),
            (self.row0, self.col1, fx * (1.0 - fy)),
            (self.row1, self.col0, (1.0 - fx) * fy),
            (self.row1, self.col1, fx * fy),
        ]
    }
}

// Lower index, upper index and fractional weight along one axis. The last
// texel is addressed with weight 1 on the upper tap so that integer positions
// reproduce the stored value exactly.
fn axis(v: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let lo = (v.floor() as usize).min(n - 2);
    (lo, lo + 1, v - lo as f64)
}

impl DenseMap {
    /// Bilinear lookup of all channels at `(x, y)`, written into `out`.
    /// Returns `false` (leaving `out` untouched) when the lookup is invalid
    /// under `policy`.
    pub fn sample_into(&self, x: f64, y: f64, policy: BorderPolicy, out: &mut [f64]) -> bool {
        let (x, y) = match policy {
            BorderPolicy::Invalid => (x, y),
            BorderPolicy::Clamp => (
                x.clamp(0.0, self.width.saturating_sub(1) as f64),
                y.clamp(0.0, self.height.saturating_sub(1) as f64),
            ),
        };
        let Some(st) = Stencil::new(x, y, self.width, self.height) else {
            return false;
        };
        let taps = st.taps();
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            // Rows first, then blend vertically.
            let top = self.get(taps[0].0, taps[0].1, c) * (1.0 - st.fx)
                + self.get(taps[1].0, taps[1].1, c) * st.fx;
            let bottom = self.get(taps[2].0, taps[2].1, c) * (1.0 - st.fx)
                + self.get(taps[3].0, taps[3].1, c) * st.fx;
            *o = top * (1.0 - st.fy) + bottom * st.fy;
        }
        true
    }
}

/// Bilinear interpolation of `map` at each `(x, y)` query, with texel centres
/// at integer coordinates.
pub fn bilinear_sample(map: &DenseMap, coords: &[Pixel], policy: BorderPolicy) -> Result<Samples> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    let c = map.channels();
    let mut values = vec![0.0; coords.len() * c];
    let mut valid = vec![false; coords.len()];
    for (k, q) in coords.iter().enumerate() {
        check_finite(q.x, q.y)?;
        valid[k] = map.sample_into(q.x, q.y, policy, &mut values[k * c..(k + 1) * c]);
    }
    Ok(Samples {
        channels: c,
        values,
        valid,
    })
}
