//! Convex polygon clipping for bird's-eye-view box overlap.

use crate::Scalar;

/// Shoelace area, unsigned.
pub(crate) fn polygon_area<S: Scalar>(poly: &[[S; 2]]) -> S {
    if poly.len() < 3 {
        return S::zero();
    }
    let mut acc = S::zero();
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        acc = acc + (x0 * y1 - x1 * y0);
    }
    (acc / S::from_f64_lossy(2.0)).abs()
}

fn cross<S: Scalar>(o: [S; 2], a: [S; 2], b: [S; 2]) -> S {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segment_line_intersection<S: Scalar>(p0: [S; 2], p1: [S; 2], a: [S; 2], b: [S; 2]) -> [S; 2] {
    // Intersection of segment p0-p1 with the infinite line through a-b.
    let dx = p1[0] - p0[0];
    let dy = p1[1] - p0[1];
    let ex = b[0] - a[0];
    let ey = b[1] - a[1];
    let denom = dx * ey - dy * ex;
    if denom == S::zero() {
        // Parallel within float precision; either endpoint is on the line.
        return p1;
    }
    let t = ((a[0] - p0[0]) * ey - (a[1] - p0[1]) * ex) / denom;
    [p0[0] + t * dx, p0[1] + t * dy]
}

/// Sutherland-Hodgman clip of `subject` by a convex, counter-clockwise
/// `clip` polygon. Returns the intersection polygon (possibly empty).
pub(crate) fn convex_clip<S: Scalar>(subject: &[[S; 2]], clip: &[[S; 2]]) -> Vec<[S; 2]> {
    let mut output: Vec<[S; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= S::zero();
            let prev_in = cross(a, b, prev) >= S::zero();
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}
