//! Transform-domain tensor algebra and layer-selective low-rank compression.
//!
//! This crate implements a third-order tensor algebra built on an invertible
//! transform along tubes (the orthonormal DCT-II by default): the c-product,
//! the c-SVD with its singular tubes and rank notions, partial tensor Lanczos
//! bidiagonalization for dominant singular triplets, structure-aware
//! tensorization of transformer weight matrices, and the TLASER compression
//! pipeline with a matrix-SVD (LASER) baseline for budget-matched comparison.
//!
//! The narrative guide in `book/` walks through each concept with runnable
//! snippets; those snippets are compiled and executed as part of `cargo test`.
//!
//! ```
//! use tlaser::{csvd, Tensor3, TransformSpec};
//!
//! let a = Tensor3::from_fn(4, 3, 2, |i, j, k| (i + 2 * j + k) as f64);
//! let f = csvd(&a, &TransformSpec::dct(2)).unwrap();
//! let err = (&f.reconstruct().unwrap() - &a).frobenius_norm();
//! assert!(err <= 1e-10 * a.frobenius_norm());
//! ```

pub mod algebra;
pub mod compress;
pub mod csvd;
pub mod error;
pub mod lanczos;
pub mod rank;
pub mod store;
pub mod tensor;
pub mod tensorize;
pub mod transform;

pub use algebra::{
    c_identity, c_product, c_transpose, facewise_product, identity_tube, is_f_diagonal,
    is_f_orthogonal, scale_by_tube, IdentityTensor,
};
pub use compress::{
    compare_methods, compress_model, laser_layer, laser_matrix, laser_params, rel_error,
    tlaser_layer, tlaser_params, CompareMode, CompressionReport, LayerAction, LayerOutcome,
    LayerReport, Method, MethodComparison,
};
pub use csvd::{average_rank, csvd, tubal_rank, CSvdFactors};
pub use error::{Error, Result};
pub use lanczos::{
    approx_triplets, lanczos_bidiag, normalize_slice, seeded_start_slice, triplets_from_state,
    BidiagState, TripletEstimate,
};
pub use rank::{allocate_ranks, energy_rank, ratio_rank, LayerSelection, RankPolicy};
pub use store::{
    load_config, load_manifest, read_tns, read_tns_header, save_manifest, write_tns,
    CompressionConfig, ConfigLayer, LayerKind, ManifestEntry, ModelManifest, TnsData, TnsDtype,
};
pub use tensor::{matrix_frobenius_norm, LateralSlice, Mode, Tensor3, Tube};
pub use tensorize::{
    phi_attn, phi_attn_inv, phi_ffn_in, phi_ffn_in_inv, phi_ffn_out, phi_ffn_out_inv, phi_inverse,
    tensorize, WeightKind,
};
pub use transform::{
    dct_matrix, dct_mode3, idct_mode3, l_inverse, l_transform, TransformKind, TransformSpec,
};

/// Compiles and runs every code block in the guide under `book/`, keeping
/// the narrative chapters in lockstep with the library.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }

    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(Tensors, "../../../book/src/tensors.md");
    chapter!(Transforms, "../../../book/src/transforms.md");
    chapter!(CAlgebra, "../../../book/src/c-algebra.md");
    chapter!(CSvd, "../../../book/src/c-svd.md");
    chapter!(Lanczos, "../../../book/src/lanczos.md");
    chapter!(Tensorize, "../../../book/src/tensorize.md");
    chapter!(Compression, "../../../book/src/compression.md");
    chapter!(Formats, "../../../book/src/formats.md");
    chapter!(Cli, "../../../book/src/cli.md");
}
