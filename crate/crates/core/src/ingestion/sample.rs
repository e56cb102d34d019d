use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::types::{OutcomeStatus, PatientRecord};
use super::IngestError;

/// Draws `n_expired` expired and `n_survived` survived records uniformly
/// without replacement. The result is sorted by stay id and depends only on
/// the pool contents and `seed`, not on pool order.
pub fn sample_balanced(
    records: &[PatientRecord],
    n_expired: usize,
    n_survived: usize,
    seed: u64,
) -> Result<Vec<PatientRecord>, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_expired + n_survived);
    for (status, wanted) in [(OutcomeStatus::Expired, n_expired), (OutcomeStatus::Survived, n_survived)] {
        let mut stratum: Vec<&PatientRecord> =
            records.iter().filter(|r| r.outcome.status == status).collect();
        if stratum.len() < wanted {
            return Err(IngestError::InsufficientStratum {
                stratum: status,
                requested: wanted,
                available: stratum.len(),
            });
        }
        stratum.sort_by_key(|r| r.stay_id);
        for i in index::sample(&mut rng, stratum.len(), wanted) {
            out.push(stratum[i].clone());
        }
    }
    out.sort_by_key(|r| r.stay_id);
    Ok(out)
}
