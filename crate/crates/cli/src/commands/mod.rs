pub mod compare;
pub mod extrapolate;
pub mod fit;
pub mod landscape;
pub mod weights;
