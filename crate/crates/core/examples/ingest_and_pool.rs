//! Pool per-frame features into 4 s clips, write the binary format and read it back.

use ndarray::Array2;
use weakanno::ingest::{load_embeddings, pool_frames, save_embeddings, WindowingSpec};

fn main() -> weakanno::error::Result<()> {
    let fps = 2.0;
    let frames = Array2::from_shape_fn((240, 8), |(t, j)| ((t / 20) as f32) + 0.01 * j as f32);
    let clips = pool_frames("p01", frames.view(), WindowingSpec::CLIPS, fps, "frames")?;
    println!("{} frames -> {} clips of dim {}", frames.nrows(), clips.len(), clips.dim());
    println!("first spans: {:?}", &clips.spans()[..3]);

    let dir = std::env::temp_dir().join("weakanno-ingest-example");
    std::fs::create_dir_all(&dir).map_err(|e| weakanno::error::Error::io(&dir, e))?;
    let path = dir.join("p01.wemb");
    save_embeddings(&path, &clips)?;
    let back = load_embeddings(&path, Some(8))?;
    assert_eq!(back.clips(), clips.clips());
    assert_eq!(back.spans(), clips.spans());
    println!("round-tripped through {}", path.display());
    Ok(())
}
