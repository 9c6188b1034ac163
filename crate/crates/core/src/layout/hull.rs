//! Convex hull vertex sets for cluster envelopes. Clusters are small, so the
//! 3D case enumerates supporting planes directly.

type P3 = [f64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: P3, b: P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: P3) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: P3, s: f64) -> P3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Andrew's monotone chain; returns indices of strict hull vertices.
fn hull_2d(points: &[(f64, f64)], idx: &[usize], eps: f64) -> Vec<usize> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|a, b| {
        points[*a].0.total_cmp(&points[*b].0).then(points[*a].1.total_cmp(&points[*b].1))
    });
    order.dedup_by(|a, b| {
        (points[*a].0 - points[*b].0).abs() <= eps && (points[*a].1 - points[*b].1).abs() <= eps
    });
    if order.len() <= 2 {
        return order;
    }
    let turn = |o: usize, a: usize, b: usize| {
        let (o, a, b) = (points[o], points[a], points[b]);
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<usize> = Vec::with_capacity(order.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> =
            if pass == 0 { Box::new(order.iter()) } else { Box::new(order.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= eps {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Vertices of the convex hull of `points`, in input order. Degenerate
/// (collinear or coplanar) inputs yield the hull of the lower-dimensional
/// set.
pub fn hull_vertices(points: &[P3]) -> Vec<P3> {
    let mut pts: Vec<P3> = Vec::with_capacity(points.len());
    for p in points {
        if !pts.contains(p) {
            pts.push(*p);
        }
    }
    if pts.len() <= 2 {
        return pts;
    }
    let extent = pts
        .iter()
        .flat_map(|p| p.iter().map(|c| c.abs()))
        .fold(1.0_f64, f64::max);
    let eps = 1e-9 * extent;

    let p0 = pts[0];
    let far = |from: &dyn Fn(P3) -> f64| {
        (0..pts.len()).max_by(|a, b| from(pts[*a]).total_cmp(&from(pts[*b]))).unwrap()
    };
    let i1 = far(&|p| norm(sub(p, p0)));
    let axis = sub(pts[i1], p0);
    let axis_len = norm(axis);
    if axis_len <= eps {
        return vec![p0];
    }
    let u = scale(axis, 1.0 / axis_len);
    let line_dist = |p: P3| norm(cross(sub(p, p0), u));
    let i2 = far(&line_dist);
    if line_dist(pts[i2]) <= eps {
        let lo = (0..pts.len()).min_by(|a, b| dot(sub(pts[*a], p0), u).total_cmp(&dot(sub(pts[*b], p0), u)));
        let hi = (0..pts.len()).max_by(|a, b| dot(sub(pts[*a], p0), u).total_cmp(&dot(sub(pts[*b], p0), u)));
        let mut ids = vec![lo.unwrap(), hi.unwrap()];
        ids.sort_unstable();
        return ids.into_iter().map(|i| pts[i]).collect();
    }

    let mut is_vertex = vec![false; pts.len()];
    let mut face = |normal: P3, origin: P3, on_plane: &[usize]| {
        let a = {
            let v = if normal[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let c = cross(normal, v);
            scale(c, 1.0 / norm(c))
        };
        let b = cross(normal, a);
        let flat: Vec<(f64, f64)> = pts.iter().map(|p| (dot(sub(*p, origin), a), dot(sub(*p, origin), b))).collect();
        for i in hull_2d(&flat, on_plane, eps) {
            is_vertex[i] = true;
        }
    };

    let n0 = cross(axis, sub(pts[i2], p0));
    let n0 = scale(n0, 1.0 / norm(n0));
    if pts.iter().all(|p| dot(sub(*p, p0), n0).abs() <= eps) {
        let all: Vec<usize> = (0..pts.len()).collect();
        face(n0, p0, &all);
    } else {
        let n = pts.len();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let normal = cross(sub(pts[j], pts[i]), sub(pts[k], pts[i]));
                    let len = norm(normal);
                    if len <= eps * extent {
                        continue;
                    }
                    let normal = scale(normal, 1.0 / len);
                    let dists: Vec<f64> = pts.iter().map(|p| dot(sub(*p, pts[i]), normal)).collect();
                    let above = dists.iter().all(|d| *d >= -eps);
                    let below = dists.iter().all(|d| *d <= eps);
                    if !(above || below) {
                        continue;
                    }
                    let on_plane: Vec<usize> = (0..n).filter(|m| dists[*m].abs() <= eps).collect();
                    face(normal, pts[i], &on_plane);
                }
            }
        }
    }
    pts.iter().zip(is_vertex).filter(|(_, v)| *v).map(|(p, _)| *p).collect()
}
