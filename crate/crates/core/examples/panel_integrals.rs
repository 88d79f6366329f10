//! Closed-form log and double-layer integrals over a segment, checked against
//! brute-force Gauss away from the segment.

use layerpot::geometry::Vec2;
use layerpot::quadrature::{gauss_legendre, segment_double_layer_integral, segment_log_integral, Basis};

fn main() -> layerpot::Result<()> {
    let (a, b) = (Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
    let rule = gauss_legendre(64)?;
    for x in [Vec2::new(0.3, 0.8), Vec2::new(2.0, -0.5), Vec2::new(0.5, 1e-3)] {
        let exact = segment_log_integral(&a, &b, &x, Basis::Constant)?;
        let brute = rule.integrate(0.0, 1.0, |t| -(a + (b - a) * t - x).norm().ln() / (2.0 * std::f64::consts::PI));
        let dl = segment_double_layer_integral(&a, &b, &x, Basis::Constant)?;
        println!("x = ({:.3}, {:.3}): log {exact:+.12e} (gauss {brute:+.12e}), double layer {dl:+.6e}", x.x, x.y);
    }
    // on the segment itself only the closed form is usable
    let on = segment_log_integral(&a, &b, &Vec2::new(0.25, 0.0), Basis::LinearRight)?;
    println!("on the segment, linear basis: {on:+.12e}");
    Ok(())
}
