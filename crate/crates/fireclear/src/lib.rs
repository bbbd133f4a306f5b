//! Fire-sale clearing equilibria for banking networks: liquidation demand,
//! the clearing fixed point, counterfactual incentive analysis
//! (crowding-out), maximal bailout/bail-in clusters with weak and strong
//! decompositions, perfection dynamics over homophily subspaces, and the
//! threshold/isomorphism machinery behind regime-transition sweeps.
//!
//! The accompanying guide in `book/` walks through the concepts with
//! runnable examples; its code blocks are compiled as doc-tests.

pub mod clearing;
pub mod counterfactual;
pub mod dynamics;
pub mod model;
pub mod partition;
pub mod report;
pub mod roots;
pub mod scenario;
pub mod transitions;

pub use clearing::{ClearingSolution, LipschitzReport, SolveError, SolveMethod, SolverConfig};
pub use model::{Bank, IndustryPanel, MarketEnv, Modularity, ModelError, Scenario};

#[cfg(doctest)]
mod booktests {
    macro_rules! book_chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            #[allow(unused)]
            mod $name {}
        };
    }

    book_chapter!(introduction, "../../../book/src/introduction.md");
    book_chapter!(model, "../../../book/src/model.md");
    book_chapter!(clearing, "../../../book/src/clearing.md");
    book_chapter!(crowding_out, "../../../book/src/crowding-out.md");
    book_chapter!(clusters, "../../../book/src/clusters.md");
    book_chapter!(dynamics, "../../../book/src/dynamics.md");
    book_chapter!(transitions, "../../../book/src/transitions.md");
    book_chapter!(cli, "../../../book/src/cli.md");
    book_chapter!(scenario_format, "../../../book/src/scenario-format.md");
}
