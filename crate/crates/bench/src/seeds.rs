//! Child seeds for trials, datasets and scales.
//!
//! `child_seed(master, trial, dataset, scale)` folds the four words through
//! the splitmix64 finalizer one at a time. The mapping depends only on its
//! arguments, so parallel execution order cannot change any stream.

/// Stream index of each cloud within a trial.
pub const T2: u64 = 0;
pub const T2_SCALED: u64 = 1;
pub const T3: u64 = 2;
pub const T3_SCALED: u64 = 3;
/// Stream for the random GLES weights of a trial.
pub const WEIGHTS: u64 = 4;
/// Sketch streams sit at `SKETCH_OFFSET + dataset`.
pub const SKETCH_OFFSET: u64 = 8;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn child_seed(master: u64, trial: u64, dataset: u64, scale: u64) -> u64 {
    [trial, dataset, scale].iter().fold(mix(master), |acc, w| mix(acc ^ mix(*w)))
}
