//! Image and scene files, layered export.

pub mod image_io;
pub mod layers;
pub mod scene_file;

pub use image_io::{
    list_images, load_frames, load_image, load_rgba, load_template, load_templates, save_png, save_rgba16,
};
pub use layers::{composite_layers, export_layers, render_layer, LayerEntry, LayerManifest, SkippedLayer};
pub use scene_file::{decode_scene, encode_scene, load_scene, save_scene, SCENE_MAGIC, SCENE_VERSION};
