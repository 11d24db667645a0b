use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Source sample position and blend weight for one output coordinate,
/// half-pixel centers (align-corners = false), clamped to the edge.
fn taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resize of the trailing two (spatial) axes. Leading axes are
/// treated as independent planes, so an H×W grid and a C×H×W image both work.
pub fn bilinear_resize<T: Real>(grid: &Tensor<T>, target_h: usize, target_w: usize) -> Result<Tensor<T>> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::invalid("bilinear_resize", "target dims must be at least 1"));
    }
    let rank = grid.rank();
    if rank < 2 {
        return Err(Error::shape("bilinear_resize", "rank", ">= 2", rank));
    }
    let (h, w) = (grid.shape()[rank - 2], grid.shape()[rank - 1]);
    if h == 0 || w == 0 {
        return Err(Error::invalid("bilinear_resize", "source dims must be at least 1"));
    }
    let mut shape = grid.shape().to_vec();
    shape[rank - 2] = target_h;
    shape[rank - 1] = target_w;
    if h == target_h && w == target_w {
        return Ok(grid.clone());
    }

    let ys = taps(target_h, h);
    let xs = taps(target_w, w);
    let planes = grid.len() / (h * w);
    let mut out = Vec::with_capacity(planes * target_h * target_w);
    for src in grid.data().chunks_exact(h * w) {
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let at = |y: usize, x: usize| src[y * w + x].as_f64();
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(T::of_f64(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Tensor::from_vec(&shape, out)
}
