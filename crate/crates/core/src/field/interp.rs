//! Bilinear plane and trilinear lattice lookups and their adjoint scatters.

use super::coord::NormalizedCoord;
use super::params::FieldParams;
use crate::real::Real;

/// Lower vertex index and fractional offset of `u` in `[0, 1]` on an axis of `n >= 2` vertices.
#[inline]
fn locate<R: Real>(u: f64, n: usize) -> (usize, R) {
    let pos = u * (n - 1) as f64;
    let i0 = (pos.floor() as usize).min(n - 2);
    (i0, R::lit(pos - i0 as f64))
}

/// Four bilinear corners `(vertex, weight)` of a `rows x cols` plane.
#[inline]
pub fn plane_corners<R: Real>(rows: usize, cols: usize, row_u: f64, col_u: f64) -> [(usize, R); 4] {
    let (r0, fr) = locate::<R>(row_u, rows);
    let (c0, fc) = locate::<R>(col_u, cols);
    let one = R::one();
    let base = r0 * cols + c0;
    [
        (base, (one - fr) * (one - fc)),
        (base + 1, (one - fr) * fc),
        (base + cols, fr * (one - fc)),
        (base + cols + 1, fr * fc),
    ]
}

/// Eight trilinear corners `(vertex, weight)` of a `t x y x x` lattice.
#[inline]
pub fn lattice_corners<R: Real>(dims: (usize, usize, usize), c: &NormalizedCoord) -> [(usize, R); 8] {
    let (nt, ny, nx) = dims;
    let (t0, ft) = locate::<R>(c.t, nt);
    let (y0, fy) = locate::<R>(c.y, ny);
    let (x0, fx) = locate::<R>(c.x, nx);
    let one = R::one();
    let mut out = [(0usize, R::zero()); 8];
    let mut k = 0;
    for dt in 0..2 {
        let wt = if dt == 0 { one - ft } else { ft };
        for dy in 0..2 {
            let wy = if dy == 0 { one - fy } else { fy };
            for dx in 0..2 {
                let wx = if dx == 0 { one - fx } else { fx };
                let v = ((t0 + dt) * ny + (y0 + dy)) * nx + (x0 + dx);
                out[k] = (v, wt * wy * wx);
                k += 1;
            }
        }
    }
    out
}

#[inline]
fn gather<R: Real>(table: &[R], channels: usize, corners: &[(usize, R)], out: &mut [R]) {
    out.fill(R::zero());
    for &(v, w) in corners {
        let row = &table[v * channels..(v + 1) * channels];
        for (o, &f) in out.iter_mut().zip(row) {
            *o += w * f;
        }
    }
}

#[inline]
fn scatter<R: Real>(table: &mut [R], channels: usize, corners: &[(usize, R)], grad: &[R]) {
    for &(v, w) in corners {
        let row = &mut table[v * channels..(v + 1) * channels];
        for (t, &g) in row.iter_mut().zip(grad) {
            *t += w * g;
        }
    }
}

/// Write the concatenated features of `c` into `out`
/// (`[xy | xt | yt | level 0 | level 1 | ...]`).
pub fn gather_features<R: Real>(params: &FieldParams<R>, c: &NormalizedCoord, out: &mut [R]) {
    let tp = &params.tri_plane;
    let ch = tp.channels;
    let (xy, rest) = out.split_at_mut(ch);
    let (xt, rest) = rest.split_at_mut(ch);
    let (yt, mut rest) = rest.split_at_mut(ch);
    gather(&tp.xy, ch, &plane_corners(tp.res_y, tp.res_x, c.y, c.x), xy);
    gather(&tp.xt, ch, &plane_corners(tp.res_t, tp.res_x, c.t, c.x), xt);
    gather(&tp.yt, ch, &plane_corners(tp.res_t, tp.res_y, c.t, c.y), yt);
    let lc = params.lattices.channels;
    for (shape, level) in params.lattices.shapes.iter().zip(&params.lattices.levels) {
        let (seg, tail) = rest.split_at_mut(lc);
        gather(level, lc, &lattice_corners((shape.t, shape.y, shape.x), c), seg);
        rest = tail;
    }
}

/// Adjoint of [`gather_features`]: add `weight * grad` into every contributing vertex of `grads`.
pub fn scatter_features<R: Real>(grads: &mut FieldParams<R>, c: &NormalizedCoord, grad: &[R]) {
    let ch = grads.tri_plane.channels;
    let (res_x, res_y, res_t) = (grads.tri_plane.res_x, grads.tri_plane.res_y, grads.tri_plane.res_t);
    let tp = &mut grads.tri_plane;
    scatter(&mut tp.xy, ch, &plane_corners(res_y, res_x, c.y, c.x), &grad[..ch]);
    scatter(&mut tp.xt, ch, &plane_corners(res_t, res_x, c.t, c.x), &grad[ch..2 * ch]);
    scatter(&mut tp.yt, ch, &plane_corners(res_t, res_y, c.t, c.y), &grad[2 * ch..3 * ch]);
    let lc = grads.lattices.channels;
    let mut offset = 3 * ch;
    for (shape, level) in grads.lattices.shapes.iter().zip(grads.lattices.levels.iter_mut()) {
        scatter(level, lc, &lattice_corners((shape.t, shape.y, shape.x), c), &grad[offset..offset + lc]);
        offset += lc;
    }
}
