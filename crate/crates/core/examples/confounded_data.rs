//! Builds a confounded training set from the toy glyphs, rebalances it and
//! draws the three test distributions; also shows the notch confounder.

use disbench::confounds::{
    apply_notch_image, cell_counts, generate_toy, make_test_split, phi_coefficient, rebalance_oversample,
    subsample_contingency, ContingencySpec, NotchSpec, TestKind,
};

fn show(name: &str, c: [usize; 4]) {
    println!("{name:<12} cells (00,01,10,11) = {c:?}  phi = {:+.3}", phi_coefficient(c));
}

fn main() -> disbench::Result<()> {
    let pool = generate_toy(4000, 0);
    show("pool", cell_counts(&pool));

    let train = subsample_contingency(&pool, &ContingencySpec::new(0.95, 1000)?, 1)?.samples;
    show("train", cell_counts(&train));
    show("rebalanced", cell_counts(&rebalance_oversample(&train, 2)?));
    for kind in TestKind::ALL {
        let split = make_test_split(&pool, kind, 400, 0.95, 3)?.samples;
        show(kind.name(), cell_counts(&split));
    }

    // The notch removes a ring of spatial frequencies; on a thin glyph it
    // mostly dims the stroke edges.
    let img = &pool[0];
    let filtered = apply_notch_image(&img.pixels, img.side, &NotchSpec::default())?;
    let energy = |p: &[f32]| p.iter().map(|v| (*v as f64).powi(2)).sum::<f64>();
    println!("notch: pixel energy {:.1} -> {:.1}", energy(&img.pixels), energy(&filtered));
    Ok(())
}
