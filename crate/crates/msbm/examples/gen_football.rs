use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    // Six-conference college-football-style schedule: dense intra-conference
    // play plus a few cross-conference games per team.
    let sizes = [9usize, 8, 11, 12, 10, 13]; // 63 teams
    let n: usize = sizes.iter().sum();
    let mut conf = Vec::new();
    for (c, &s) in sizes.iter().enumerate() {
        for _ in 0..s { conf.push(c); }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20001104); // generation seed
    // shuffle arrival order (alphabetical-like: independent of conference)
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let label: Vec<usize> = order.iter().map(|&t| conf[t]).collect();
    let p_intra = 0.8;
    let p_cross = 2.6 / 53.0;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if label[i] == label[j] { p_intra } else { p_cross };
            if rng.gen::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    let g = msbm::OrderedGraph::from_pairs(n, &pairs).unwrap();
    println!("n={} edges={} density={:.3}", n, g.edge_count(), g.density());
    let mut ok = 0;
    for seed in 0..6u64 {
        let trace = msbm::inference::select_k(&g, 2, 8, seed).unwrap();
        println!("seed {seed}: k_hat={} m={:?}", trace.k_hat,
            trace.m_values.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>());
        if trace.k_hat == 6 { ok += 1; }
    }
    println!("{ok}/6 correct");
    if ok >= 5 {
        std::fs::create_dir_all("data").unwrap();
        msbm::io::write_graph(std::path::Path::new("data/football.txt"), &g, 6).unwrap();
        let labeling = msbm::Labeling::new(label, 6).unwrap();
        msbm::io::write_labels(std::path::Path::new("data/football_labels.txt"), &labeling).unwrap();
        println!("WROTE data/football.txt");
    }
}
