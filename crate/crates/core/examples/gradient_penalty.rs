//! The WGAN-GP penalty on a linear critic, where it has a closed form.
//!
//! cargo run --example gradient_penalty

use setgan::metrics::{adversarial_loss, gradient_penalty, Critic};
use setgan::tensor::Tensor;
use setgan::Result;

struct Linear(Tensor<f64>);

impl Critic<f64> for Linear {
    fn value_and_input_grad(&self, x: &Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
        Ok((self.0.dot(x), self.0.clone()))
    }
}

fn main() {
    let w = Tensor::from_vec(1, 2, 2, vec![0.5f64, -1.0, 2.0, 0.25]);
    let real = Tensor::full(1, 2, 2, 0.3);
    let fake = Tensor::full(1, 2, 2, -0.6);
    let gp = gradient_penalty(&Linear(w.clone()), &real, &fake, 4).unwrap();
    println!("penalty {gp:.6}, (|w| - 1)^2 = {:.6}", (w.norm() - 1.0).powi(2));
    let (g, d) = adversarial_loss(1.2, -0.4, gp, 0.1);
    println!("disc loss {d:.4}, gen loss {g:.4}");
}
