use serde::{Deserialize, Serialize};

use super::assign::Stream;

/// Summary counts of a stream, all derived from the presence matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    /// Number of experiences each class is present in.
    pub class_occurrences: Vec<usize>,
    /// Number of classes present in each experience.
    pub experience_class_counts: Vec<usize>,
    /// Number of classes whose first occurrence is each experience.
    pub first_occurrence_histogram: Vec<usize>,
    /// Number of samples in each experience.
    pub experience_sizes: Vec<usize>,
    /// Entries inserted by the empty-experience fix-up.
    pub fixups: usize,
}

pub fn stream_stats(stream: &Stream) -> StreamStats {
    let schedule = &stream.schedule;
    let (n_classes, n_exp) = (schedule.n_classes(), schedule.n_experiences());
    let mut class_occurrences = vec![0; n_classes];
    let mut experience_class_counts = vec![0; n_exp];
    for (c, occ) in class_occurrences.iter_mut().enumerate() {
        for t in 1..=n_exp {
            if schedule.is_present(c, t) {
                *occ += 1;
                experience_class_counts[t - 1] += 1;
            }
        }
    }
    let mut first_occurrence_histogram = vec![0; n_exp];
    for &t in &schedule.first_occurrence {
        first_occurrence_histogram[t - 1] += 1;
    }
    StreamStats {
        class_occurrences,
        experience_class_counts,
        first_occurrence_histogram,
        experience_sizes: stream.experiences.iter().map(|e| e.total_samples()).collect(),
        fixups: schedule.fixups.len(),
    }
}

impl StreamStats {
    /// Plain-text rendering used by the `stats` subcommand.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("experience\tclasses\tsamples\tnew_classes\n");
        for t in 0..self.experience_class_counts.len() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                t + 1,
                self.experience_class_counts[t],
                self.experience_sizes[t],
                self.first_occurrence_histogram[t]
            ));
        }
        out.push_str("\nclass\toccurrences\n");
        for (c, n) in self.class_occurrences.iter().enumerate() {
            out.push_str(&format!("{c}\t{n}\n"));
        }
        out.push_str(&format!("\nfixups\t{}\n", self.fixups));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::config::{FirstOccurrenceDist, RepetitionSpec, StreamConfig};

    fn stream(first: FirstOccurrenceDist, q: f64) -> Stream {
        Stream::generate(&StreamConfig {
            n_experiences: 50,
            experience_size: 200,
            n_classes: 8,
            samples_per_class: 40,
            first_occurrence: first,
            repetition: RepetitionSpec::Fixed { q },
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn cumulative_class_from_start_occurs_everywhere() {
        let s = stream(FirstOccurrenceDist::Explicit { pmf: vec![1.0] }, 1.0);
        let stats = stream_stats(&s);
        assert!(stats.class_occurrences.iter().all(|&n| n == 50));
        assert_eq!(stats.first_occurrence_histogram[0], 8);
    }

    #[test]
    fn standard_stream_occurs_once_per_class() {
        // 50 experiences and 8 classes: most columns need a fix-up, so count
        // only the natural entries.
        let s = stream(FirstOccurrenceDist::Uniform, 0.0);
        let stats = stream_stats(&s);
        for c in 0..8 {
            let fixed = s
                .schedule
                .fixups
                .iter()
                .filter(|f| f.class == c && f.experience > 1)
                .count();
            assert_eq!(stats.class_occurrences[c] - fixed, 1);
        }
    }
}
