//! Serves the synthetic-catalog recommender over HTTP.
//!
//! ```text
//! cargo run --example http_server -- 127.0.0.1:8080
//! curl -s localhost:8080/recommend -d '{"text": "i want to learn about bridges and towers", "n": 3}'
//! curl -s localhost:8080/health
//! ```

use isorec::embed::EmbeddingSource;
use isorec::serve::{build_index, serve_http, QueryEncoder};
use isorec::synthetic::{desk_config, desk_run, DeskSetup, DESK_SEED};

#[tokio::main]
async fn main() -> isorec::Result<()> {
    let bind = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into());
    let setup = DeskSetup::new(DESK_SEED)?;
    let run = desk_run(&setup, &desk_config(DESK_SEED))?;
    let index = build_index(&setup.courses, &setup.source, &run.outcome.weights)?;
    let encoder = QueryEncoder::new(EmbeddingSource::stub(setup.source.width(), DESK_SEED), run.outcome.weights)?;
    println!("serving {} courses on http://{bind}", index.len());
    serve_http(index, encoder, &bind).await
}
