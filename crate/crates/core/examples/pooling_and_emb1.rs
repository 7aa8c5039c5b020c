//! Stub token embeddings, masked mean pooling and an EMB1 round trip.

use isorec::embed::{masked_mean_pool, read_embeddings, stub_encode, write_embeddings, TokenEmbeddingSequence};

fn main() -> isorec::Result<()> {
    let seq = stub_encode("signals and systems", 4, 0)?;
    println!("{} tokens of width {}", seq.num_tokens(), seq.width());
    println!("pooled {:?}", masked_mean_pool(&seq)?.vector);

    // Padding rows are masked out and do not move the mean.
    let mut hidden = seq.hidden().to_vec();
    hidden.extend([9.0f32; 8]);
    let mut mask = seq.mask().to_vec();
    mask.extend([0, 0]);
    let padded = TokenEmbeddingSequence::new("padded", 4, hidden, mask)?;
    println!("padded {:?}", masked_mean_pool(&padded)?.vector);

    let path = std::env::temp_dir().join("isorec-example.emb1");
    write_embeddings(&path, &[seq, padded])?;
    let back = read_embeddings(&path)?;
    println!("read back {:?}", back.iter().map(|s| s.id()).collect::<Vec<_>>());
    std::fs::remove_file(path)?;
    Ok(())
}
