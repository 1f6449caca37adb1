pub mod cone;
pub mod expr;
pub mod farkas;
pub mod polyhedral;
pub mod set;

pub use cone::{cone_contains, normal_cone_at, ConeRep};
pub use expr::{AbsAtom, Block, ConvexExpr};
pub use farkas::{farkas_certificate, FarkasCertificate};
pub use polyhedral::{Halfspace, Hyperplane, PolyhedralSet};
pub use set::{affine_image, minkowski_sum, ConvexSet, ImageMode, SetRep, Zonotope};
