//! Trains on the synthetic catalog, builds the course index and answers a
//! few free-text queries.

use isorec::embed::EmbeddingSource;
use isorec::serve::{build_index, recommend, QueryEncoder};
use isorec::synthetic::{desk_config, desk_run, DeskSetup, DESK_SEED};

fn main() -> isorec::Result<()> {
    let setup = DeskSetup::new(DESK_SEED)?;
    let run = desk_run(&setup, &desk_config(DESK_SEED))?;
    let index = build_index(&setup.courses, &setup.source, &run.outcome.weights)?;
    let encoder = QueryEncoder::new(EmbeddingSource::stub(setup.source.width(), DESK_SEED), run.outcome.weights)?;

    let queries = std::env::args().skip(1).collect::<Vec<_>>();
    let queries = if queries.is_empty() {
        vec!["I am curious about drones and arduino".to_string(), "my goal is to understand music and radio".to_string()]
    } else {
        queries
    };
    for q in queries {
        let result = recommend(&index, &q, &encoder, 3)?;
        print!("{result}");
        let clusters: Vec<_> = result.codes().iter().map(|k| setup.data.group_of(k.as_str()).unwrap_or("?")).collect();
        println!("clusters: {clusters:?}\n");
    }
    Ok(())
}
