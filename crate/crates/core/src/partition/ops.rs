use crate::error::{invalid, Error, Result};
use crate::numerics::{dirichlet_sample, multinomial_split, RngStream};
use crate::scalar::Scalar;

use super::dataset::{LabeledDataset, Split};
use super::plan::{PartitionKind, PartitionPlan, PartitionSpec};

const PER_CLASS_NOTE: &str = "dirichlet shares are drawn per class across clients, then each \
class's samples are split multinomially; every train sample is assigned exactly once";

/// Dispatch on `spec.kind`.
pub fn build_partition<T: Scalar>(
    spec: &PartitionSpec,
    data: &LabeledDataset<T>,
    rng: &mut RngStream,
) -> Result<PartitionPlan> {
    spec.validate()?;
    match spec.kind {
        PartitionKind::Dirichlet => dirichlet_partition(data, spec.num_clients, spec.alpha, rng),
        PartitionKind::SortPartition => {
            sort_and_partition(data, spec.num_clients, spec.classes_per_client)
        }
        PartitionKind::BaseToNew => {
            let shuffle = if spec.shuffle_classes {
                Some(rng)
            } else {
                None
            };
            base_to_new_split(data, spec.num_clients, shuffle).map(|(plan, _)| plan)
        }
        PartitionKind::Domain => domain_partition(data, spec.clients_per_domain, spec.alpha, rng),
    }
}

/// Label-skewed split: per class, Dirichlet(α) client shares and a
/// multinomial draw of that class's samples.
pub fn dirichlet_partition<T: Scalar>(
    data: &LabeledDataset<T>,
    num_clients: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<PartitionPlan> {
    if num_clients == 0 {
        return invalid("dirichlet partition needs at least one client");
    }
    let train = data.by_class(Split::Train, None);
    let total: usize = train.iter().map(Vec::len).sum();
    if total == 0 {
        return invalid("dirichlet partition of an empty dataset");
    }
    if total < num_clients {
        return invalid(format!(
            "{total} train samples cannot cover {num_clients} clients"
        ));
    }
    let mut plan = PartitionPlan::empty(
        PartitionKind::Dirichlet,
        num_clients,
        data.len(),
        data.class_count,
    );
    let clients: Vec<usize> = (0..num_clients).collect();
    split_classes(&mut plan, data, &train, &clients, alpha, rng)?;
    mirror_test_views(&mut plan, &data.by_class(Split::Test, None), &clients);
    plan.notes.push(PER_CLASS_NOTE.to_string());
    Ok(plan)
}

fn split_classes<T: Scalar>(
    plan: &mut PartitionPlan,
    data: &LabeledDataset<T>,
    by_class: &[Vec<usize>],
    clients: &[usize],
    alpha: f64,
    rng: &mut RngStream,
) -> Result<()> {
    let mut owned: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); data.class_count]; clients.len()];
    for (class, members) in by_class.iter().enumerate() {
        // Draws happen for empty classes too so the stream is independent
        // of which classes happen to be populated.
        let shares = dirichlet_sample(alpha, clients.len(), rng)?;
        let counts = multinomial_split(members.len(), &shares, rng)?;
        let mut order = members.clone();
        rng.shuffle(&mut order);
        let mut cursor = 0;
        for (slot, &k) in counts.iter().enumerate() {
            owned[slot][class].extend_from_slice(&order[cursor..cursor + k]);
            cursor += k;
        }
    }
    enforce_minimum_one(&mut owned);
    for (slot, per_class) in owned.iter().enumerate() {
        for (class, idx) in per_class.iter().enumerate() {
            for &i in idx {
                plan.assign(i, clients[slot], class);
            }
        }
    }
    Ok(())
}

/// Every client ends with at least one sample, taken from the currently
/// largest client's largest class.
fn enforce_minimum_one(owned: &mut [Vec<Vec<usize>>]) {
    let size = |c: &Vec<Vec<usize>>| c.iter().map(Vec::len).sum::<usize>();
    for empty in 0..owned.len() {
        if size(&owned[empty]) > 0 {
            continue;
        }
        let donor = (0..owned.len())
            .max_by(|&a, &b| size(&owned[a]).cmp(&size(&owned[b])).then(b.cmp(&a)))
            .expect("nonempty client list");
        if size(&owned[donor]) < 2 {
            continue;
        }
        let class = (0..owned[donor].len())
            .max_by(|&a, &b| {
                owned[donor][a]
                    .len()
                    .cmp(&owned[donor][b].len())
                    .then(b.cmp(&a))
            })
            .expect("nonempty class list");
        let moved = owned[donor][class].pop().expect("donor class nonempty");
        owned[empty][class].push(moved);
    }
}

/// Deal each class's test samples to clients in proportion to their train
/// counts of that class (largest-remainder rounding, ties to lower slot).
fn mirror_test_views(plan: &mut PartitionPlan, test_by_class: &[Vec<usize>], clients: &[usize]) {
    for (class, members) in test_by_class.iter().enumerate() {
        let weights: Vec<usize> = clients.iter().map(|&c| plan.histograms[c][class]).collect();
        let quotas = apportion(members.len(), &weights);
        let mut cursor = 0;
        for (slot, &q) in quotas.iter().enumerate() {
            plan.test_views[clients[slot]].extend_from_slice(&members[cursor..cursor + q]);
            cursor += q;
        }
    }
    for view in &mut plan.test_views {
        view.sort_unstable();
    }
}

/// Largest-remainder apportionment of `total` by integer weights. All-zero
/// weights allocate nothing.
pub(crate) fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut out: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut remainders: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (total * w % sum, i))
        .collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = total - out.iter().sum::<usize>();
    for &(_, i) in remainders.iter().take(left) {
        out[i] += 1;
    }
    out
}

/// Pathological split: train samples sorted by label are cut into
/// `N·k` contiguous shards; client `i` holds classes `(i·k + j) mod C`.
pub fn sort_and_partition<T: Scalar>(
    data: &LabeledDataset<T>,
    num_clients: usize,
    classes_per_client: usize,
) -> Result<PartitionPlan> {
    let c = data.class_count;
    if num_clients == 0 || classes_per_client == 0 {
        return Err(Error::Config(
            "sort partition needs at least one client and one class per client".into(),
        ));
    }
    if classes_per_client > c {
        return Err(Error::Config(format!(
            "classes_per_client = {classes_per_client} exceeds class count {c}"
        )));
    }
    if num_clients * classes_per_client < c {
        return Err(Error::Config(format!(
            "{num_clients} clients x {classes_per_client} classes cannot cover {c} classes"
        )));
    }
    let train = data.by_class(Split::Train, None);
    // holders[class] = clients holding that class, in client order.
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); c];
    for client in 0..num_clients {
        for j in 0..classes_per_client {
            holders[(client * classes_per_client + j) % c].push(client);
        }
    }
    let mut plan = PartitionPlan::empty(PartitionKind::SortPartition, num_clients, data.len(), c);
    for (class, members) in train.iter().enumerate() {
        let owners = &holders[class];
        if members.len() < owners.len() {
            return Err(Error::Config(format!(
                "class {class} has {} train samples for {} holders",
                members.len(),
                owners.len()
            )));
        }
        let quotas = apportion(members.len(), &vec![1; owners.len()]);
        let mut cursor = 0;
        for (slot, &q) in quotas.iter().enumerate() {
            for &i in &members[cursor..cursor + q] {
                plan.assign(i, owners[slot], class);
            }
            cursor += q;
        }
    }
    let clients: Vec<usize> = (0..num_clients).collect();
    mirror_test_views(&mut plan, &data.by_class(Split::Test, None), &clients);
    Ok(plan)
}

/// Base-to-new split: the first ⌈C/2⌉ classes of the (optionally shuffled)
/// class order are dealt round-robin to clients; the rest are held out.
/// Returns the plan and the test indices of the new classes.
pub fn base_to_new_split<T: Scalar>(
    data: &LabeledDataset<T>,
    num_clients: usize,
    shuffle: Option<&mut RngStream>,
) -> Result<(PartitionPlan, Vec<usize>)> {
    let c = data.class_count;
    if c < 2 {
        return invalid(format!("base-to-new needs at least 2 classes, got {c}"));
    }
    if num_clients == 0 {
        return invalid("base-to-new needs at least one client");
    }
    let mut order: Vec<usize> = (0..c).collect();
    if let Some(rng) = shuffle {
        rng.shuffle(&mut order);
    }
    let base_count = c.div_ceil(2);
    if num_clients > base_count {
        return Err(Error::Config(format!(
            "{num_clients} clients exceed {base_count} base classes"
        )));
    }
    let mut base: Vec<usize> = order[..base_count].to_vec();
    let mut new: Vec<usize> = order[base_count..].to_vec();
    let mut plan = PartitionPlan::empty(PartitionKind::BaseToNew, num_clients, data.len(), c);
    let train = data.by_class(Split::Train, None);
    let test = data.by_class(Split::Test, None);
    let mut new_eval = Vec::new();
    for &class in &new {
        new_eval.extend_from_slice(&test[class]);
    }
    new_eval.sort_unstable();
    for (k, &class) in base.iter().enumerate() {
        let client = k % num_clients;
        for &i in &train[class] {
            plan.assign(i, client, class);
        }
        plan.test_views[client].extend_from_slice(&test[class]);
    }
    for view in &mut plan.test_views {
        view.extend_from_slice(&new_eval);
        view.sort_unstable();
    }
    plan.class_order = Some(order);
    base.sort_unstable();
    new.sort_unstable();
    plan.base_classes = Some(base);
    plan.new_classes = Some(new);
    Ok((plan, new_eval))
}

/// Domain shift: each domain's train data is Dirichlet-split among its own
/// `clients_per_domain` clients; client ids are domain-major.
pub fn domain_partition<T: Scalar>(
    data: &LabeledDataset<T>,
    clients_per_domain: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<PartitionPlan> {
    if clients_per_domain == 0 {
        return Err(Error::Config(
            "clients_per_domain must be at least 1".into(),
        ));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!(
            "dirichlet concentration must be positive, got {alpha}"
        ));
    }
    let domains = data.domain_count();
    if domains == 0 {
        return invalid("domain partition of an empty dataset");
    }
    let n = domains * clients_per_domain;
    let mut plan = PartitionPlan::empty(PartitionKind::Domain, n, data.len(), data.class_count);
    let mut client_domains = Vec::with_capacity(n);
    for d in 0..domains {
        let train = data.by_class(Split::Train, Some(d));
        let count: usize = train.iter().map(Vec::len).sum();
        if count < clients_per_domain {
            return Err(Error::Config(format!(
                "domain {d} has {count} train samples for {clients_per_domain} clients"
            )));
        }
        let clients: Vec<usize> = (d * clients_per_domain..(d + 1) * clients_per_domain).collect();
        let mut sub = rng.child(&[d as u64]);
        split_classes(&mut plan, data, &train, &clients, alpha, &mut sub)?;
        mirror_test_views(&mut plan, &data.by_class(Split::Test, Some(d)), &clients);
        client_domains.extend(std::iter::repeat_n(d, clients_per_domain));
    }
    plan.client_domains = Some(client_domains);
    plan.notes.push(PER_CLASS_NOTE.to_string());
    Ok(plan)
}
