use crate::verifier::{ModelParams, OptimizerState};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Linear warmup to `learning_rate`, then linear decay to zero at
/// `total_steps`. Steps are 1-based.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl Schedule {
    pub fn new(learning_rate: f64, total_steps: u64, warmup_fraction: f64) -> Self {
        Schedule {
            learning_rate,
            warmup_steps: (warmup_fraction * total_steps as f64).ceil() as u64,
            total_steps,
        }
    }

    pub fn rate(&self, step: u64) -> f64 {
        if step <= self.warmup_steps {
            self.learning_rate * step as f64 / self.warmup_steps as f64
        } else if step >= self.total_steps {
            0.0
        } else {
            let remaining = (self.total_steps - step) as f64;
            self.learning_rate * remaining / (self.total_steps - self.warmup_steps) as f64
        }
    }
}

/// Adaptive-moment optimizer.
///
/// A tensor whose gradient is exactly zero everywhere is left alone: neither
/// its moments nor its values change. Without this, momentum would keep
/// moving the rationale head on batches where its loss term is switched off.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub state: OptimizerState,
    pub schedule: Schedule,
}

impl Adam {
    pub fn new(params: &ModelParams, schedule: Schedule) -> Self {
        Adam {
            state: OptimizerState {
                step: 0,
                first_moment: params.zeros_like(),
                second_moment: params.zeros_like(),
            },
            schedule,
        }
    }

    /// Applies one update and returns the learning rate used.
    pub fn step(&mut self, params: &mut ModelParams, gradient: &ModelParams) -> f64 {
        self.state.step += 1;
        let t = self.state.step;
        let lr = self.schedule.rate(t);
        let correction1 = 1.0 - BETA1.powf(t as f64);
        let correction2 = 1.0 - BETA2.powf(t as f64);
        let grads = gradient.tensors();
        let firsts = self.state.first_moment.tensors_mut();
        let seconds = self.state.second_moment.tensors_mut();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(firsts)
            .zip(seconds)
        {
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            m.zip_mut_with(g, |m, &g| *m = BETA1 * *m + (1.0 - BETA1) * g);
            v.zip_mut_with(g, |v, &g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
            ndarray::Zip::from(p)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let m_hat = m / correction1;
                    let v_hat = v / correction2;
                    *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                });
        }
        lr
    }
}
