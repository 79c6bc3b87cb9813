use fkpp_core::asymptotics::residual_scaling_report;

fn main() {
    let t = std::time::Instant::now();
    let reps = residual_scaling_report(1, &[0.5, 0.9, 0.95, 0.99], (1.0, 100.0), 200).unwrap();
    for r in &reps {
        println!("alpha={} R={:?} at {:?} {:?}", r.alpha, r.r_alpha, r.argmax_x, r.failure);
    }
    println!("{:?}", t.elapsed());
}
