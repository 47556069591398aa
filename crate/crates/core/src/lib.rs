//! Figure mining over scientific literature.
//!
//! The pipeline ingests figure images with paper metadata, routes each figure
//! through a multi-chart gate, dismantles compound figures into singletons,
//! classifies singletons into five types from bag-of-visual-feature
//! histograms, ranks papers on the citation graph, and runs viziometric
//! analyses relating figure use to impact. A keyword index serves the
//! classified figures ordered by paper influence.

pub mod alef;
pub mod analysis;
pub mod corpus;
pub mod dismantle;
pub mod features;
pub mod figtype;
pub mod gate;
pub mod geometry;
pub mod labels;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod search;
pub mod svm;
pub mod synth;

pub use geometry::Rect;
pub use labels::FigureLabel;
pub use raster::LumaImage;
