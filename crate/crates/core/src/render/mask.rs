use super::CnocsMap;

/// Binary row-major mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.data[v * self.width + u] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }
}

/// Pixels whose winning object is `index`.
pub fn object_mask(map: &CnocsMap, index: usize) -> Mask {
    Mask {
        width: map.width as usize,
        height: map.height as usize,
        data: map.object_index.iter().map(|w| *w == Some(index as u32)).collect(),
    }
}

/// Foreground of a map (any object).
pub fn foreground_mask(map: &CnocsMap) -> Mask {
    Mask {
        width: map.width as usize,
        height: map.height as usize,
        data: map.object_index.iter().map(Option::is_some).collect(),
    }
}

/// Area-average over `factor × factor` cells, then `mean ≥ threshold`.
///
/// The output is `ceil(w / factor) × ceil(h / factor)`; edge cells average
/// over the pixels they actually cover.
pub fn downsample_mask(mask: &Mask, factor: usize, threshold: f64) -> Mask {
    assert!(factor >= 1, "downsample factor must be at least 1");
    let ow = mask.width.div_ceil(factor);
    let oh = mask.height.div_ceil(factor);
    Mask::from_fn(ow, oh, |cu, cv| {
        let (u0, v0) = (cu * factor, cv * factor);
        let (u1, v1) = ((u0 + factor).min(mask.width), (v0 + factor).min(mask.height));
        let mut on = 0usize;
        for v in v0..v1 {
            for u in u0..u1 {
                on += usize::from(mask.get(u, v));
            }
        }
        let total = (u1 - u0) * (v1 - v0);
        on as f64 / total as f64 >= threshold
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_square_downsamples_to_centered_square() {
        // 64×64 image, 32×32 square centered → 8×8 grid with a 4×4 center block.
        let m = Mask::from_fn(64, 64, |u, v| (16..48).contains(&u) && (16..48).contains(&v));
        let d = downsample_mask(&m, 8, 0.5);
        assert_eq!((d.width, d.height), (8, 8));
        let expected = Mask::from_fn(8, 8, |u, v| (2..6).contains(&u) && (2..6).contains(&v));
        assert_eq!(d, expected);
    }

    #[test]
    fn unaligned_square_matches_area_average_oracle() {
        let m = Mask::from_fn(80, 80, |u, v| (21..59).contains(&u) && (21..59).contains(&v));
        let d = downsample_mask(&m, 8, 0.5);
        for cv in 0..10 {
            for cu in 0..10 {
                let cover = |c: usize| {
                    let (lo, hi) = (c * 8, c * 8 + 8);
                    hi.min(59).saturating_sub(lo.max(21))
                };
                let frac = (cover(cu) * cover(cv)) as f64 / 64.0;
                assert_eq!(d.get(cu, cv), frac >= 0.5, "cell ({cu},{cv})");
            }
        }
    }

    #[test]
    fn ragged_edges_use_partial_cells() {
        let m = Mask::from_fn(10, 3, |u, _| u >= 8);
        let d = downsample_mask(&m, 4, 0.5);
        assert_eq!((d.width, d.height), (3, 1));
        assert_eq!(d.data, vec![false, false, true]);
    }
}
