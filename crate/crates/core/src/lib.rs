//! Piecewise-linear global surrogates of black-box models.
//!
//! A surrogate is built by querying a black box on Sobol points over a
//! hyper-rectangular domain and recursively splitting the domain where a
//! cumulative score process of the local least-squares fit peaks. Once
//! built, local attributions, global importances and what-if curves are
//! read off the tree without further queries.
//!
//! ```
//! use gleams_core::{build_surrogate, explain_local, BlackBox, BuildConfig, HyperRectangle, LinearFunction};
//!
//! let model = BlackBox::new(LinearFunction::new(vec![1.0, 2.0, -3.0]));
//! let domain = HyperRectangle::unit(2).unwrap();
//! let tree = build_surrogate(&model, &domain, &BuildConfig::default().with_log2_points(8)).unwrap();
//! let e = explain_local(&tree, &[0.3, 0.7]).unwrap();
//! assert!((e.attribution[0] - 2.0).abs() < 1e-9);
//! ```

pub mod blackbox;
pub mod eval;
pub mod explain;
pub mod geometry;
pub mod linfit;
pub mod partition;
pub mod sobol;

pub use blackbox::{
    make_random_pwl, BlackBox, BlackBoxError, FnModel, HttpAdapter, LinearFunction, Model,
    PiecewiseLinearGroundTruth, StdioAdapter, SyntheticError,
};
pub use eval::{
    evaluate_surrogate, expected_restricted_loss, monotonicity, recall_important_features,
    spearman, EvalConfig, EvalError, EvalReport, IntegrationMode, Monotonicity, Recall,
};
pub use explain::{
    explain_local, global_importance, signed_importance, whatif, ExplainError, GlobalImportance,
    LocalExplanation, Segment, WhatIfCurve,
};
pub use geometry::{GeometryError, HyperRectangle};
pub use linfit::{fit_ols, FitError, LocalLinearModel};
pub use partition::{
    build_surrogate, route, surrogate_predict, BuildConfig, BuildError, BuildMeta, FormatError,
    Leaf, MeasurementSet, SurrogateTree, TreeNode,
};
pub use sobol::{SobolError, SobolGenerator};
