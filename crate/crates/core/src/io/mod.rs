pub mod container;
pub mod manifest;
pub mod mesh;
pub mod pool;
pub mod proposals;
pub mod scene;

pub use manifest::{read_gt, read_pred, scan, write_gt, write_pred, GT_SUFFIX, PRED_SUFFIX};
pub use mesh::{load_mesh, load_points, save_mesh, save_points};
pub use pool::{load_pool, load_pool_meshes, save_pool};
pub use proposals::{load_proposals, save_proposals};
pub use scene::{load_scene, save_scene};
