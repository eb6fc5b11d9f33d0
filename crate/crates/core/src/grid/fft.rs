//! Three-dimensional complex FFT built from rustfft one-dimensional plans.
//!
//! Plans are cached process-wide, so constructing an [`Fft3`] after the first
//! one for a given size is cheap. Each instance owns its scratch buffers and
//! is therefore not shareable across threads; clone instead.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, Mutex, OnceLock};

static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .expect("FFT planner lock");
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

/// Unnormalized forward / normalized inverse 3-D FFT on row-major data
/// (x slowest, z fastest).
pub struct Fft3 {
    n: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
    scratch: Vec<Complex64>,
    plane: Vec<Complex64>,
}

impl Fft3 {
    pub fn new(n: [usize; 3]) -> Self {
        let fwd = [plan(n[0], false), plan(n[1], false), plan(n[2], false)];
        let inv = [plan(n[0], true), plan(n[1], true), plan(n[2], true)];
        let scratch_len = fwd
            .iter()
            .chain(inv.iter())
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let plane_len = (n[0] * n[2]).max(n[1] * n[2]);
        Self {
            n,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            plane: vec![Complex64::new(0.0, 0.0); plane_len],
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.n
    }

    /// In-place forward transform (no normalization).
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.pass(data, false);
    }

    /// In-place inverse transform, normalized by 1/(nx ny nz).
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.pass(data, true);
        let scale = 1.0 / (self.n[0] * self.n[1] * self.n[2]) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn pass(&mut self, data: &mut [Complex64], inverse: bool) {
        let [nx, ny, nz] = self.n;
        assert_eq!(data.len(), nx * ny * nz, "buffer does not match FFT size");
        let plans = if inverse { &self.inv } else { &self.fwd };

        // z axis: rows are contiguous, one batched call covers all of them.
        plans[2].process_with_scratch(data, &mut self.scratch);

        // y axis: for each x slab, transpose the (y, z) plane so y rows
        // become contiguous, batch-transform, transpose back.
        for i in 0..nx {
            let slab = &mut data[i * ny * nz..(i + 1) * ny * nz];
            for j in 0..ny {
                for k in 0..nz {
                    self.plane[k * ny + j] = slab[j * nz + k];
                }
            }
            plans[1].process_with_scratch(&mut self.plane[..ny * nz], &mut self.scratch);
            for j in 0..ny {
                for k in 0..nz {
                    slab[j * nz + k] = self.plane[k * ny + j];
                }
            }
        }

        // x axis: for each y, gather the (x, z) plane with x contiguous.
        for j in 0..ny {
            for i in 0..nx {
                let row = (i * ny + j) * nz;
                for k in 0..nz {
                    self.plane[k * nx + i] = data[row + k];
                }
            }
            plans[0].process_with_scratch(&mut self.plane[..nx * nz], &mut self.scratch);
            for i in 0..nx {
                let row = (i * ny + j) * nz;
                for k in 0..nz {
                    data[row + k] = self.plane[k * nx + i];
                }
            }
        }
    }
}
