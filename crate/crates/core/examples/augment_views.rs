//! Word-level augmentation and one epoch of contrastive view pairs.

use isorec::augment::{augment_text, build_view_pairs, AugmentProfile, SynonymLexicon};
use isorec::synthetic::DeskSetup;

fn main() -> isorec::Result<()> {
    let lexicon = SynonymLexicon::builtin();
    let text = "introduction to the design and analysis of electric power systems";
    for (name, profile) in [("light", AugmentProfile::light()), ("heavy", AugmentProfile::heavy())] {
        for seed in 0..3 {
            println!("{name} {seed}: {}", augment_text(text, &profile, &lexicon, seed)?);
        }
    }

    let setup = DeskSetup::new(1)?;
    let pairs = build_view_pairs(&setup.courses, &setup.train, &AugmentProfile::heavy(), &lexicon, 0)?;
    println!("\n{} pairs for {} courses and {} statements", pairs.len(), setup.courses.len(), setup.train.len());
    for p in pairs.iter().take(3) {
        println!("[{}] {:?}\n  a: {}\n  b: {}", p.label, p.source, p.view_a_text, p.view_b_text);
    }
    Ok(())
}
