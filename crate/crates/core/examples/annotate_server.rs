//! Serve the labeling API over a directory of crops. Without arguments a few
//! synthetic crops are written to a temporary directory first.
//!
//! `cargo run --example annotate_server [CROPS_DIR] [PORT]` (an empty
//! CROPS_DIR selects the demo crops)
//!
//! Try `curl 'localhost:8080/api/next?task=morphology'` and
//! `curl -X POST localhost:8080/api/labels -H 'content-type: application/json'
//!  -d '{"crop_id":"demo_1","task":"suitability","labels":{"good":true}}'`.

use std::path::PathBuf;
use std::sync::Arc;

use phenopipe::annotate::{serve, AnnotationSession, SessionConfig};
use phenopipe::crops::{crop_path, to_rgba};
use phenopipe::synth;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let crops = match args.next().filter(|s| !s.is_empty()) {
        Some(dir) => PathBuf::from(dir),
        None => {
            let dir = std::env::temp_dir().join("phenopipe_annotate_demo");
            std::fs::create_dir_all(&dir)?;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for i in 1..=6 {
                let (crop, mask) = synth::render_leaf(synth::random_label(&mut rng), &mut rng);
                to_rgba(&crop, &mask).save(crop_path(&dir, &format!("demo_{i}")))?;
            }
            dir
        }
    };
    let port: u16 = args.next().map_or(Ok(8080), |p| p.parse())?;
    let store = crops.join("labels.jsonl");
    println!("crops {}, store {}", crops.display(), store.display());
    let session = Arc::new(AnnotationSession::open(SessionConfig::new(&crops, &store))?);
    tokio::runtime::Runtime::new()?.block_on(serve(session, ([127, 0, 0, 1], port).into()))?;
    Ok(())
}
