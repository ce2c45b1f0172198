//! Talks to a protocol server (`/v1/caption`, `/v1/vqa`, ...).
//!
//! ```text
//! cargo run --example http_backend -- http://localhost:8000 path/to/image.jpg
//! ```

use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use cic::backends::{Backends, ChatMessage, ChatParams, HttpConfig, HttpTransport, ImagePayload, ImageRef, Region};

fn main() -> Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let Some(base) = args.next() else {
        eprintln!("usage: http_backend <base-url> [image-path]");
        return Ok(());
    };
    let mut config = HttpConfig::new(base);
    config.bearer_token = std::env::var("CIC_TOKEN").ok();
    config.timeout = Duration::from_secs(30);
    let mut backends = Backends::new(Arc::new(HttpTransport::new(config)));

    if let Some(path) = args.next() {
        backends = backends.with_image_payload(ImagePayload::Base64);
        let image = ImageRef::new("example", path, Region::West);
        let caption = backends.caption(&image).context("caption")?;
        println!("caption: {caption}");
        let q = "What is the architectural style of the buildings in this image?";
        println!("vqa: {}", backends.vqa(&image, q).context("vqa")?);
    }
    let reply = backends.chat(&[ChatMessage::user("Say hello in five words.")], ChatParams::default())?;
    println!("chat: {reply}");
    let v = backends.embed_text(&["a temple".into(), "a pagoda".into()])?;
    println!("embed_text: dim {}, cosine {:.4}", v[0].dim(), v[0].cosine(&v[1]));
    Ok(())
}
