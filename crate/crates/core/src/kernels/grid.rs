use crate::error::{invalid, Result};
use crate::measures::DiscreteMeasure;

/// All measures on `space_size` states whose weights are multiples of
/// `1/resolution`. Vertices `δ_i` are always included.
#[derive(Debug, Clone)]
pub struct MeasureGrid {
    space_size: usize,
    resolution: usize,
    points: Vec<DiscreteMeasure>,
}

/// Default resolutions: 50 for two states, 8 for up to five, coarser beyond.
pub fn default_resolution(space_size: usize) -> usize {
    match space_size {
        0..=2 => 50,
        3 => 20,
        4..=5 => 8,
        6..=8 => 4,
        _ => 2,
    }
}

impl MeasureGrid {
    pub fn new(space_size: usize, resolution: usize) -> Result<Self> {
        if space_size == 0 {
            return Err(invalid("space_size", "must be positive"));
        }
        if resolution == 0 {
            return Err(invalid("resolution", "must be positive"));
        }
        let expected = binomial(resolution + space_size - 1, space_size - 1);
        if expected > 5_000_000 {
            return Err(invalid(
                "resolution",
                format!("grid would contain {expected} measures"),
            ));
        }
        let mut points = Vec::with_capacity(expected);
        let mut parts = vec![0usize; space_size];
        compositions(resolution, 0, &mut parts, &mut |c| {
            let r = resolution as f64;
            let probs = c.iter().map(|&k| k as f64 / r).collect();
            // k/R sums to one up to a few ulps; skip the strict check
            points.push(DiscreteMeasure::from_propagation(probs));
        });
        debug_assert_eq!(points.len(), expected);
        Ok(Self {
            space_size,
            resolution,
            points,
        })
    }

    pub fn space_size(&self) -> usize {
        self.space_size
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn points(&self) -> &[DiscreteMeasure] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn compositions(remaining: usize, pos: usize, parts: &mut [usize], emit: &mut impl FnMut(&[usize])) {
    if pos + 1 == parts.len() {
        parts[pos] = remaining;
        emit(parts);
        return;
    }
    for k in (0..=remaining).rev() {
        parts[pos] = k;
        compositions(remaining - k, pos + 1, parts, emit);
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_matches_stars_and_bars() {
        for (n, r) in [(2, 50), (3, 7), (5, 8), (1, 3)] {
            let g = MeasureGrid::new(n, r).unwrap();
            assert_eq!(g.len(), binomial(r + n - 1, n - 1));
        }
        assert_eq!(MeasureGrid::new(5, 8).unwrap().len(), 495);
    }

    #[test]
    fn contains_vertices_and_is_normalized() {
        let g = MeasureGrid::new(4, 5).unwrap();
        for i in 0..4 {
            let d = DiscreteMeasure::dirac(4, i).unwrap();
            assert!(g.points().contains(&d));
        }
        for p in g.points() {
            assert!((p.mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_contains_coarse_grid() {
        let coarse = MeasureGrid::new(3, 4).unwrap();
        let fine = MeasureGrid::new(3, 8).unwrap();
        for p in coarse.points() {
            assert!(fine
                .points()
                .iter()
                .any(|q| crate::measures::tv_distance(p, q).unwrap() < 1e-15));
        }
    }
}
