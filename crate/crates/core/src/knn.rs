//! Exact m-nearest-neighbour search in one and two dimensions.
//!
//! Neighbours are ordered by `(distance, index)`, so equidistant candidates
//! resolve to the smaller observation index and replays are deterministic.

use alloc::vec;
use alloc::vec::Vec;

/// Static 2-D k-d tree over a point set, keyed by caller-supplied ids.
#[derive(Clone, Debug)]
pub struct KdTree2 {
    // points laid out as an implicit balanced tree: node = midpoint of a slice
    pts: Vec<[f64; 2]>,
    ids: Vec<usize>,
    axis: Vec<u8>,
}

impl KdTree2 {
    pub fn build(points: &[[f64; 2]], ids: &[usize]) -> Self {
        assert_eq!(points.len(), ids.len());
        let mut items: Vec<([f64; 2], usize)> = points.iter().copied().zip(ids.iter().copied()).collect();
        let mut axis = vec![0u8; items.len()];
        build_rec(&mut items, &mut axis);
        let (pts, ids) = items.into_iter().unzip();
        Self { pts, ids, axis }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// The `k` nearest points to `query` excluding id `exclude`, sorted by
    /// `(squared distance, id)`.
    pub fn nearest(&self, query: [f64; 2], k: usize, exclude: Option<usize>, out: &mut Vec<(f64, usize)>) {
        out.clear();
        if k == 0 {
            return;
        }
        self.search(0, self.pts.len(), query, k, exclude, out);
    }

    fn search(&self, lo: usize, hi: usize, q: [f64; 2], k: usize, exclude: Option<usize>, best: &mut Vec<(f64, usize)>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.pts[mid];
        let id = self.ids[mid];
        if Some(id) != exclude {
            let dx = p[0] - q[0];
            let dy = p[1] - q[1];
            offer(best, k, (dx * dx + dy * dy, id));
        }
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - p[ax];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, k, exclude, best);
        // equality keeps equidistant points with smaller ids reachable
        if best.len() < k || diff * diff <= best[best.len() - 1].0 {
            self.search(far.0, far.1, q, k, exclude, best);
        }
    }
}

fn build_rec(items: &mut [([f64; 2], usize)], axis: &mut [u8]) {
    if items.len() <= 1 {
        if let Some(a) = axis.first_mut() {
            *a = 0;
        }
        return;
    }
    // split on the wider coordinate
    let spread = |d: usize| {
        let (mn, mx) = items
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), it| (a.min(it.0[d]), b.max(it.0[d])));
        mx - mn
    };
    let ax = if spread(0) >= spread(1) { 0 } else { 1 };
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| a.0[ax].total_cmp(&b.0[ax]).then(a.1.cmp(&b.1)));
    axis[mid] = ax as u8;
    let (left, rest) = items.split_at_mut(mid);
    let (laxis, raxis) = axis.split_at_mut(mid);
    build_rec(left, laxis);
    build_rec(&mut rest[1..], &mut raxis[1..]);
}

/// Inserts `cand` into the sorted list `best` of at most `k` entries.
#[inline]
fn offer(best: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
    let less = |a: &(f64, usize), b: &(f64, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    if best.len() == k {
        if !less(&cand, &best[k - 1]) {
            return;
        }
        best.pop();
    }
    let pos = best.iter().position(|b| less(&cand, b)).unwrap_or(best.len());
    best.insert(pos, cand);
}

/// For every position `i`, the `k` nearest other positions under `|v_i − v_l|`,
/// ties by smaller index. Returns a flat `values.len() × k` list.
///
/// `k` must be smaller than `values.len()`.
pub fn nearest_1d(values: &[f64], k: usize) -> Vec<usize> {
    let n = values.len();
    assert!(k < n, "k must be below the number of points");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut out = Vec::with_capacity(n * k);
    let mut cands: Vec<(f64, usize)> = Vec::new();
    for i in 0..n {
        if k == 0 {
            continue;
        }
        let r = rank[i];
        let vi = values[i];
        let (mut left, mut right) = (r, r + 1);
        let dl = |left: usize| if left == 0 { f64::INFINITY } else { (vi - values[order[left - 1]]).abs() };
        let dr = |right: usize| if right >= n { f64::INFINITY } else { (values[order[right]] - vi).abs() };
        cands.clear();
        // merge outward in nondecreasing distance; keep going through ties
        // with the k-th distance so the index tie-break sees every contender
        let mut kth = f64::INFINITY;
        loop {
            let (a, b) = (dl(left), dr(right));
            let next = a.min(b);
            if next == f64::INFINITY || (cands.len() >= k && next > kth) {
                break;
            }
            if a <= b {
                left -= 1;
                cands.push((a, order[left]));
            } else {
                cands.push((b, order[right]));
                right += 1;
            }
            if cands.len() == k {
                kth = next;
            }
        }
        cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        out.extend(cands.iter().take(k).map(|c| c.1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[[f64; 2]], q: usize, k: usize) -> Vec<usize> {
        let mut c: Vec<(f64, usize)> = (0..points.len())
            .filter(|&j| j != q)
            .map(|j| {
                let dx = points[j][0] - points[q][0];
                let dy = points[j][1] - points[q][1];
                (dx * dx + dy * dy, j)
            })
            .collect();
        c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        c.into_iter().take(k).map(|x| x.1).collect()
    }

    #[test]
    fn kd_tree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..20 {
            let n = 2 + trial * 7;
            // coarse grid so exact ties occur
            let pts: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.random_range(0..6) as f64 * 0.5, rng.random_range(0..6) as f64 * 0.25])
                .collect();
            let ids: Vec<usize> = (0..n).collect();
            let tree = KdTree2::build(&pts, &ids);
            let mut out = Vec::new();
            for k in [1, 2, 3] {
                let k = k.min(n - 1);
                for q in 0..n {
                    tree.nearest(pts[q], k, Some(q), &mut out);
                    let got: Vec<usize> = out.iter().map(|x| x.1).collect();
                    assert_eq!(got, brute(&pts, q, k), "trial {trial} q {q} k {k}");
                }
            }
        }
    }

    #[test]
    fn one_dimensional_hand_case() {
        assert_eq!(nearest_1d(&[0.0, 0.4, 1.0], 1), vec![1, 0, 1]);
        // all tied: smallest other indices
        assert_eq!(nearest_1d(&[0.0; 4], 2), vec![1, 2, 0, 2, 0, 1, 0, 1]);
    }

    #[test]
    fn one_dimensional_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.random_range(2..40);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 * 0.125).collect();
            let k = rng.random_range(1..n);
            let got = nearest_1d(&v, k);
            for i in 0..n {
                let mut c: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| ((v[i] - v[j]).abs(), j)).collect();
                c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let want: Vec<usize> = c.into_iter().take(k).map(|x| x.1).collect();
                assert_eq!(&got[i * k..(i + 1) * k], &want[..]);
            }
        }
    }
}
