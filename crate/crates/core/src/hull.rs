//! Planar convex hulls (Andrew's monotone chain) and point membership.

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Hull vertices in counter-clockwise order, without collinear points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p: Vec<(f64, f64)> = points.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    p.dedup();
    if p.len() <= 2 {
        return p;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Whether `q` lies in the closed hull given by [`convex_hull`].
pub fn hull_contains(hull: &[(f64, f64)], q: (f64, f64)) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == q,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, q) == 0.0
                && q.0 >= a.0.min(b.0)
                && q.0 <= a.0.max(b.0)
                && q.1 >= a.1.min(b.1)
                && q.1 <= a.1.max(b.1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], q) >= 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_interior_points() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5), (0.5, 0.0)];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(hull_contains(&h, (0.5, 0.5)));
        assert!(hull_contains(&h, (1.0, 0.3)));
        assert!(!hull_contains(&h, (1.0001, 0.3)));
    }

    #[test]
    fn degenerate_hulls() {
        assert!(convex_hull(&[]).is_empty());
        let one = convex_hull(&[(0.0, 0.0), (0.0, 0.0)]);
        assert_eq!(one, vec![(0.0, 0.0)]);
        assert!(hull_contains(&one, (0.0, 0.0)));
        assert!(!hull_contains(&one, (1.0, 0.0)));
        let seg = convex_hull(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(seg.len(), 2);
        assert!(hull_contains(&seg, (1.5, 1.5)));
        assert!(!hull_contains(&seg, (1.5, 1.0)));
    }
}
