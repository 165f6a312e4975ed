use crate::error::{invalid, Error, Result};
use crate::losses::LossSpec;
use crate::model::DualEncoder;
use crate::numerics::{DenseMatrix, RngStream};
use crate::partition::{LabeledDataset, PartitionPlan};
use crate::scalar::Scalar;

use super::aggregate::LocalUpdate;
use super::config::{AggregatorConfig, AggregatorKind, FederationConfig};

/// One simulated participant: its local data, model copy and optimizer state.
#[derive(Debug, Clone)]
pub struct ClientState<T> {
    pub id: usize,
    pub train_x: DenseMatrix<T>,
    pub train_y: Vec<usize>,
    pub test_x: DenseMatrix<T>,
    pub test_y: Vec<usize>,
    pub model: DualEncoder<T>,
    /// Classes the training softmax ranges over; `None` means all.
    pub train_classes: Option<Vec<usize>>,
    /// FedDyn dual variable.
    pub dual: Option<Vec<T>>,
    pub local_steps: usize,
}

impl<T: Scalar> ClientState<T> {
    pub fn new(
        id: usize,
        data: &LabeledDataset<T>,
        train: &[usize],
        test: &[usize],
        model: DualEncoder<T>,
        agg: &AggregatorConfig,
    ) -> Self {
        let dual =
            (agg.kind == AggregatorKind::Feddyn).then(|| vec![T::zero(); model.trainable_len()]);
        Self {
            id,
            train_x: data.embeddings_of(train),
            train_y: data.labels_of(train),
            test_x: data.embeddings_of(test),
            test_y: data.labels_of(test),
            model,
            train_classes: None,
            dual,
            local_steps: 0,
        }
    }

    pub fn train_len(&self) -> usize {
        self.train_y.len()
    }

    pub fn test_len(&self) -> usize {
        self.test_y.len()
    }
}

/// One client per plan slot, each with its own copy of `template`.
/// Base-to-new plans restrict training to the base classes.
pub fn build_clients<T: Scalar>(
    plan: &PartitionPlan,
    data: &LabeledDataset<T>,
    template: &DualEncoder<T>,
    agg: &AggregatorConfig,
) -> Vec<ClientState<T>> {
    let train = plan.client_train();
    (0..plan.num_clients)
        .map(|id| {
            let mut c = ClientState::new(
                id,
                data,
                &train[id],
                &plan.test_views[id],
                template.clone(),
                agg,
            );
            c.train_classes = plan.base_classes.clone();
            c
        })
        .collect()
}

fn sq_dist_grad<T: Scalar>(w: &[T], anchor: &[T], coeff: T, out: &mut [T]) {
    for ((o, &x), &a) in out.iter_mut().zip(w).zip(anchor) {
        *o += coeff * (x - a);
    }
}

/// Local SGD from the broadcast `global` vector.
///
/// The per-step objective adds `(μ/2)‖w − w_g‖²` under FedProx and
/// `−⟨h, w⟩ + (α/2)‖w − w_g‖²` under FedDyn. The returned update carries
/// the client's post-round dual `h − α(w − w_g)`; the caller commits it.
pub fn local_train<T: Scalar>(
    client: &mut ClientState<T>,
    global: &[T],
    fed: &FederationConfig,
    agg: &AggregatorConfig,
    loss: &LossSpec,
    round: usize,
    rng: &mut RngStream,
) -> Result<(LocalUpdate<T>, Option<Vec<T>>)> {
    if global.len() != client.model.trainable_len() {
        return Err(Error::Transport(format!(
            "global vector has {} entries, client {} expects {}",
            global.len(),
            client.id,
            client.model.trainable_len()
        )));
    }
    client.model.load_trainable(global)?;
    let n = client.train_len();
    if n == 0 {
        return invalid(format!("client {} has no training data", client.id));
    }
    let classes: Vec<usize> = match &client.train_classes {
        Some(c) => c.clone(),
        None => (0..client.model.class_count()).collect(),
    };
    let mut local_of = vec![usize::MAX; client.model.class_count()];
    for (k, &c) in classes.iter().enumerate() {
        local_of[c] = k;
    }
    if let Some(&y) = client.train_y.iter().find(|&&y| local_of[y] == usize::MAX) {
        return invalid(format!(
            "client {} holds label {y} outside its training classes",
            client.id
        ));
    }

    let trainable = global.len();
    let per_epoch = n.div_ceil(fed.batch_size);
    let total_steps = if trainable == 0 {
        0
    } else {
        per_epoch * fed.local_epochs
    };
    let mut w = global.to_vec();
    let mut steps = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..fed.local_epochs {
        if trainable == 0 {
            break;
        }
        rng.shuffle(&mut order);
        for batch in order.chunks(fed.batch_size) {
            let x = client.train_x.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| local_of[client.train_y[i]]).collect();
            client.model.forward(&x, Some(&mut *rng))?;
            let (value, grads) = client.model.backward_subset(&y, loss, &classes)?;
            let where_ = || format!("client {} round {round} step {steps}", client.id);
            if !value.total.is_finite() {
                return Err(Error::Numeric {
                    location: where_(),
                    detail: format!("loss is {}", value.total),
                });
            }
            let mut g = grads.flatten();
            if g.len() != trainable {
                return Err(Error::Transport(format!(
                    "gradient has {} entries, trainable vector has {trainable}",
                    g.len()
                )));
            }
            match agg.kind {
                AggregatorKind::Fedprox => sq_dist_grad(&w, global, T::of(agg.mu_prox), &mut g),
                AggregatorKind::Feddyn => {
                    sq_dist_grad(&w, global, T::of(agg.alpha_dyn), &mut g);
                    if let Some(h) = &client.dual {
                        for (gv, &hv) in g.iter_mut().zip(h) {
                            *gv -= hv;
                        }
                    }
                }
                _ => {}
            }
            let lr = T::of(fed.lr_at(round, steps, total_steps));
            for (wv, &gv) in w.iter_mut().zip(&g) {
                *wv -= lr * gv;
            }
            if let Some(i) = w.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    location: where_(),
                    detail: format!("parameter {i} became non-finite"),
                });
            }
            client.model.load_trainable(&w)?;
            steps += 1;
        }
    }
    client.model.clear_cache();
    client.local_steps = steps;

    let dual = match (&client.dual, agg.kind) {
        (Some(h), AggregatorKind::Feddyn) => {
            let a = T::of(agg.alpha_dyn);
            Some(
                h.iter()
                    .zip(&w)
                    .zip(global)
                    .map(|((&hv, &wv), &gv)| hv - a * (wv - gv))
                    .collect(),
            )
        }
        _ => None,
    };
    Ok((
        LocalUpdate {
            client_id: client.id,
            vector: w,
            samples: n,
            steps,
        },
        dual,
    ))
}
