use std::collections::BTreeSet;

use rand::Rng;

use crate::fixed::Mwh;
use crate::ledger::{sha256, Account, AccountId, Role};
use crate::rng::{shuffle, stream};

use super::ScenarioConfig;

/// The generated population, grouped by behaviour.
#[derive(Clone, Debug, PartialEq)]
pub struct Agents {
    /// Every account in creation order.
    pub accounts: Vec<Account>,
    pub authorities: Vec<AccountId>,
    /// Dealers, suppliers and consumers that trade in the baseline flow.
    pub traders: Vec<AccountId>,
    pub dealers: Vec<AccountId>,
    pub suppliers: Vec<AccountId>,
    /// Dormant dealers that only act in Sybil bursts; one origin per cluster.
    pub sybil_clusters: Vec<Vec<AccountId>>,
    pub wash_pairs: Vec<(AccountId, AccountId)>,
}

impl Agents {
    pub fn get(&self, id: &AccountId) -> Option<&Account> {
        self.accounts.iter().find(|a| &a.account_id == id)
    }
}

/// Creates the scenario's accounts. Ids are hashes of the signing keys.
pub fn generate_agents(config: &ScenarioConfig) -> Agents {
    let mut rng = stream(config.seed, "agents");
    let mix = &config.role_mix;
    let capacity = Mwh::from_f64(mix.capacity_mwh);
    let mut origins = BTreeSet::new();
    let mut fresh_origin = |rng: &mut crate::rng::SimRng| loop {
        let o = format!("10.{}.{}.{}", rng.random_range(0..=255u8), rng.random_range(0..=255u8), rng.random_range(1..=254u8));
        if origins.insert(o.clone()) {
            break o;
        }
    };
    let make = |role: Role, rng: &mut crate::rng::SimRng, origin: String| {
        let key: [u8; 32] = rng.random();
        let mut tagged = b"account:".to_vec();
        tagged.extend_from_slice(&key);
        let id = AccountId(hex::encode(&sha256(&tagged)[..8]));
        Account::new(id, role, key.to_vec(), origin, capacity)
    };

    let mut accounts = Vec::new();
    let mut spawn = |role: Role, n: usize, rng: &mut crate::rng::SimRng, accounts: &mut Vec<Account>| {
        (0..n)
            .map(|_| {
                let origin = fresh_origin(rng);
                let a = make(role, rng, origin);
                let id = a.account_id.clone();
                accounts.push(a);
                id
            })
            .collect::<Vec<_>>()
    };
    let authorities = spawn(Role::Authority, mix.authorities, &mut rng, &mut accounts);
    let dealers = spawn(Role::Dealer, mix.dealers, &mut rng, &mut accounts);
    let suppliers = spawn(Role::Supplier, mix.suppliers, &mut rng, &mut accounts);
    let consumers = spawn(Role::Consumer, mix.consumers, &mut rng, &mut accounts);
    let sybil_flat = spawn(Role::Dealer, mix.sybil_clusters * mix.sybil_cluster_size, &mut rng, &mut accounts);

    let mut traders: Vec<AccountId> = dealers.iter().chain(&suppliers).chain(&consumers).cloned().collect();

    // Benign shared origins, e.g. several meters behind one gateway.
    let mut pool = traders.clone();
    shuffle(&mut pool, &mut rng);
    let size = mix.shared_origin_size.max(1);
    for group in pool.chunks(size).take(mix.shared_origin_groups) {
        if group.len() < 2 {
            break;
        }
        let origin = accounts.iter().find(|a| a.account_id == group[0]).expect("trader exists").origin_address.clone();
        for id in &group[1..] {
            accounts.iter_mut().find(|a| &a.account_id == id).expect("trader exists").origin_address = origin.clone();
        }
    }

    let mut sybil_clusters = Vec::new();
    for cluster in sybil_flat.chunks(mix.sybil_cluster_size.max(1)) {
        let origin = fresh_origin(&mut rng);
        for id in cluster {
            accounts.iter_mut().find(|a| &a.account_id == id).expect("sybil exists").origin_address = origin.clone();
        }
        sybil_clusters.push(cluster.to_vec());
    }

    let mut colluders = dealers.clone();
    shuffle(&mut colluders, &mut rng);
    let wash_pairs = colluders
        .chunks_exact(2)
        .take(mix.wash_pairs)
        .map(|p| (p[0].clone(), p[1].clone()))
        .collect();

    traders.sort();
    Agents {
        accounts,
        authorities,
        traders,
        dealers,
        suppliers,
        sybil_clusters,
        wash_pairs,
    }
}
