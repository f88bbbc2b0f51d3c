//! Deterministic fixture generator: seeded synthetic crime reports shaped
//! like real agency rows, with a pinned set of six Identity Theft records
//! (two in Portland) so the canonical demo query has a known answer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::{CrimeVocabulary, PlainRecord};

pub const DEFAULT_RECORDS_PER_AGENCY: usize = 100;
pub const DEFAULT_AGENCIES: usize = 3;

/// The six pinned Identity Theft rows. Exactly two are in Portland, one of
/// which carries a 47-character description that truncates on ingest.
const PINNED: [(&str, &str, &str, &str); 6] = [
    (
        "Portland",
        "Bank account compromised through phishing email",
        "2024-02-23",
        "14:35",
    ),
    (
        "Detroit",
        "Mail stolen from multiple residences",
        "2024-02-15",
        "06:50",
    ),
    (
        "Jacksonville",
        "Victim's information used to file tax return",
        "2024-02-22",
        "Unknown",
    ),
    (
        "Orlando",
        "Hotel rooms booked with stolen information",
        "2024-01-14",
        "18:30",
    ),
    (
        "Portland",
        "Social security number used for loan application",
        "2024-08-22",
        "Unknown",
    ),
    (
        "Santa Ana",
        "Multiple accounts opened using stolen identity",
        "2024-02-28",
        "Unknown",
    ),
];

const CITIES: [&str; 18] = [
    "Scottsdale",
    "Chicago",
    "Houston",
    "Phoenix",
    "Philadelphia",
    "San Antonio",
    "San Diego",
    "Dallas",
    "Austin",
    "Columbus",
    "Charlotte",
    "Indianapolis",
    "Seattle",
    "Denver",
    "Boston",
    "Nashville",
    "Memphis",
    "Baltimore",
];

const DESCRIPTION_LEADS: [&str; 10] = [
    "Incident reported near",
    "Suspect last seen at",
    "Victim approached outside",
    "Witness called from",
    "Evidence recovered at",
    "Officers dispatched to",
    "Complaint filed regarding",
    "Report taken at",
    "Anonymous tip about",
    "Patrol responded to",
];

const DESCRIPTION_PLACES: [&str; 8] = [
    "downtown parking garage",
    "shopping mall entrance",
    "apartment complex lot",
    "bus terminal platform",
    "riverside walking trail",
    "convenience store counter",
    "office building lobby",
    "residential back alley",
];

const NAMES: [&str; 8] = [
    "John Carter",
    "Maria Lopez",
    "David Kim",
    "Anna Novak",
    "Chris Webb",
    "Laura Chen",
    "Omar Reyes",
    "Kate Ellis",
];

pub fn agency_id(index: usize) -> String {
    format!("agency-{}", index + 1)
}

/// Generate `n_agencies` record sets of `records_per_agency` rows each.
/// The six pinned rows go round-robin across agencies (as capacity allows);
/// filler rows draw from the remaining 71 crime types, so the pinned term's
/// match count is exact.
pub fn generate(
    seed: u64,
    records_per_agency: usize,
    n_agencies: usize,
    vocab: &CrimeVocabulary,
) -> Vec<(String, Vec<PlainRecord>)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut agencies: Vec<(String, Vec<PlainRecord>)> = (0..n_agencies)
        .map(|i| (agency_id(i), Vec::with_capacity(records_per_agency)))
        .collect();

    if n_agencies > 0 && records_per_agency > 0 {
        for (i, (location, description, date, time)) in PINNED.iter().enumerate() {
            let slot = i % n_agencies;
            if agencies[slot].1.len() < records_per_agency {
                agencies[slot].1.push(PlainRecord {
                    crime_type: "Identity Theft".to_string(),
                    location: location.to_string(),
                    description: description.to_string(),
                    date: date.to_string(),
                    time: time.to_string(),
                    criminal_name: "Unknown".to_string(),
                });
            }
        }
    }

    let filler_types: Vec<&str> = vocab
        .entries()
        .iter()
        .map(|s| s.as_str())
        .filter(|t| *t != "Identity Theft")
        .collect();

    for (_, records) in agencies.iter_mut() {
        while records.len() < records_per_agency {
            records.push(random_record(&filler_types, &mut rng));
        }
        // Pinned rows land at randomized positions, not always up front.
        records.shuffle(&mut rng);
    }
    agencies
}

fn random_record<R: Rng>(filler_types: &[&str], rng: &mut R) -> PlainRecord {
    let crime_type = filler_types[rng.gen_range(0..filler_types.len())].to_string();
    let location = CITIES[rng.gen_range(0..CITIES.len())].to_string();
    let description = format!(
        "{} {}",
        DESCRIPTION_LEADS[rng.gen_range(0..DESCRIPTION_LEADS.len())],
        DESCRIPTION_PLACES[rng.gen_range(0..DESCRIPTION_PLACES.len())]
    );
    let date = format!(
        "2024-{:02}-{:02}",
        rng.gen_range(1..=12),
        rng.gen_range(1..=28)
    );
    let time = if rng.gen_bool(0.25) {
        "Unknown".to_string()
    } else {
        format!("{:02}:{:02}", rng.gen_range(0..24), rng.gen_range(0..60))
    };
    let criminal_name = if rng.gen_bool(0.7) {
        "Unknown".to_string()
    } else {
        NAMES[rng.gen_range(0..NAMES.len())].to_string()
    };
    PlainRecord {
        crime_type,
        location,
        description,
        date,
        time,
        criminal_name,
    }
}

/// Serialize one agency's records as JSON lines (the ingest input format).
pub fn to_jsonl(records: &[PlainRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("PlainRecord serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec;

    fn vocab() -> CrimeVocabulary {
        CrimeVocabulary::load().unwrap()
    }

    #[test]
    fn deterministic_for_a_seed() {
        let v = vocab();
        let a = generate(7, 100, 3, &v);
        let b = generate(7, 100, 3, &v);
        assert_eq!(a, b);
        let c = generate(8, 100, 3, &v);
        assert_ne!(a, c);
    }

    #[test]
    fn pinned_identity_theft_rows_are_exact() {
        let v = vocab();
        let fixture = generate(42, 100, 3, &v);
        assert_eq!(fixture.len(), 3);
        let all: Vec<&PlainRecord> = fixture.iter().flat_map(|(_, r)| r.iter()).collect();
        assert_eq!(all.len(), 300);

        let it: Vec<&&PlainRecord> = all
            .iter()
            .filter(|r| r.crime_type == "Identity Theft")
            .collect();
        assert_eq!(it.len(), 6);
        let portland = it.iter().filter(|r| r.location == "Portland").count();
        assert_eq!(portland, 2);
        assert!(it.iter().all(|r| r.criminal_name == "Unknown"));
        // The 47-char description exists and truncates per the field codec.
        let long = it
            .iter()
            .find(|r| r.description.len() == 47)
            .expect("47-char description present");
        let packed = codec::string_to_ascii_vec(&long.description, "description").unwrap();
        let truncated = codec::ascii_vec_to_string(&packed).unwrap();
        assert_eq!(truncated, "Bank account compromised throu");
        // Each agency holds exactly two pinned rows.
        for (_, records) in &fixture {
            assert_eq!(
                records
                    .iter()
                    .filter(|r| r.crime_type == "Identity Theft")
                    .count(),
                2
            );
        }
    }

    #[test]
    fn all_fields_ascii_and_capacity_respected() {
        let v = vocab();
        for (_, records) in generate(1, 25, 3, &v) {
            assert_eq!(records.len(), 25);
            for rec in records {
                rec.validate_ascii().unwrap();
            }
        }
        // Tiny and empty configurations do not overflow.
        let tiny = generate(1, 1, 3, &v);
        assert!(tiny.iter().all(|(_, r)| r.len() == 1));
        let empty = generate(1, 0, 1, &v);
        assert!(empty[0].1.is_empty());
    }

    #[test]
    fn jsonl_roundtrip() {
        let v = vocab();
        let fixture = generate(3, 10, 1, &v);
        let text = to_jsonl(&fixture[0].1);
        let parsed: Vec<PlainRecord> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(parsed, fixture[0].1);
    }
}
