use nls_direct::pencil::{fit_exponential_sum, PencilOptions, SampleSeries};

fn probe(label: &str, nodes: &[f64], coeffs: &[f64], count: usize) {
    let values: Vec<f64> = (0..count)
        .map(|k| nodes.iter().zip(coeffs).map(|(z, c)| c * z.powi(k as i32)).sum())
        .collect();
    let series = SampleSeries::from_real(0.5, 0.0, &values).unwrap();
    let model = fit_exponential_sum(&series, count / 2, &PencilOptions::default()).unwrap();
    let mut got: Vec<f64> = model.terms.iter().map(|t| t.node.re).collect();
    got.sort_by(f64::total_cmp);
    let mut want = nodes.to_vec();
    want.sort_by(f64::total_cmp);
    let node_err = if got.len() == want.len() {
        got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0f64, f64::max)
    } else {
        f64::NAN
    };
    println!("{label}: order {} (want {}), node err {:.2e}", model.order(), nodes.len(), node_err);
}

fn ladder(order: usize, top: f64, ratio: f64) -> Vec<f64> {
    (0..order).map(|j| top / ratio.powi((order - 1 - j) as i32)).collect()
}

fn main() {
    for &order in &[3usize, 4, 5] {
        for &ratio in &[1.6f64, 1.8, 2.0] {
            for &top in &[0.7f64, 0.92] {
                let nodes = ladder(order, top, ratio);
                let label = format!("order {order} ratio {ratio} top {top} lo {:.3}", nodes[0]);
                probe(&label, &nodes, &vec![0.25; order], 32);
            }
        }
    }
}
