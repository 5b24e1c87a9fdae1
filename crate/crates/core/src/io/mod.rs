//! File formats, weight initialization, and the segmentation metric.

mod image;
mod metric;
mod weights;

pub use image::{
    decode_pgm, decode_ppm, denormalize_pixel, encode_pgm, encode_ppm, normalize_pixel, random_image, read_image_ppm,
    read_labelmap_pgm, write_image_ppm, write_labelmap_pgm,
};
pub use metric::compute_miou;
pub use weights::{
    entry_rng, init_weights, load_weights, save_weights, unit_uniform, WeightEntry, WeightStore, FORMAT_VERSION, MAGIC,
};
