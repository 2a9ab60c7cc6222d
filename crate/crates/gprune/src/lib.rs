//! Structured pruning of dense convolutions into grouped form.
//!
//! A grouped convolution splits its input and output channels into `g`
//! groups and connects channels only within matching groups, dividing the
//! parameter and operation counts by `g`. This crate prunes a trained dense
//! layer into that shape: it searches for a pair of channel permutations
//! that concentrates kernel magnitude inside the `g` diagonal blocks, masks
//! away everything else, and exports the result in forms a deployment stack
//! can run directly.
//!
//! ```
//! use gprune::{GreedyParams, GroupCount, NormMatrix, solve_layer};
//!
//! let m = NormMatrix::from_rows(&[
//!     &[9.0, 0.1, 8.0, 0.2],
//!     &[0.3, 7.0, 0.1, 6.0],
//!     &[8.5, 0.2, 9.5, 0.1],
//!     &[0.1, 6.5, 0.3, 7.5],
//! ]).unwrap();
//! let g = GroupCount::new(2).unwrap();
//! let solution = solve_layer(&m, g, &GreedyParams { sort_rounds: 10 }).unwrap();
//! assert!(solution.recovery_ratio > 0.95);
//! ```
//!
//! The guide under `book/` walks through the model, the solvers, and the
//! file formats; its code snippets compile and run as part of `cargo test`.

pub mod bench;
pub mod cli;
pub mod conv;
pub mod error;
pub mod export;
pub mod io;
pub mod model;
pub mod oracle;
pub mod pruner;
pub mod search;

pub use error::{Error, Result};
pub use model::{GroupCount, LayerSpec, NormMatrix, Permutation, PermutationPair, WeightTensor};
pub use pruner::{
    greedy_permutation, prune_mask, recovery_ratio, solve_layer, GreedyParams, MaskPattern,
    PruneSolution,
};

#[cfg(doctest)]
mod book {
    //! Chapters of the guide, compiled here so their snippets stay honest.

    #[doc = include_str!("../../../book/src/blocks-and-permutations.md")]
    pub mod blocks_and_permutations {}

    #[doc = include_str!("../../../book/src/pruning-a-layer.md")]
    pub mod pruning_a_layer {}

    #[doc = include_str!("../../../book/src/budgeted-search.md")]
    pub mod budgeted_search {}

    #[doc = include_str!("../../../book/src/running-the-result.md")]
    pub mod running_the_result {}

    #[doc = include_str!("../../../book/src/measuring-recovery.md")]
    pub mod measuring_recovery {}

    #[doc = include_str!("../../../book/src/file-formats.md")]
    pub mod file_formats {}
}
