use serde::{Deserialize, Serialize};

use super::SearchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    Full,
    NetworkArchiveOnly,
    PromptArchiveOnly,
    MutationOnly,
    CrossoverOnly,
    RandomGeneration,
}

impl SearchMode {
    pub const ALL: [SearchMode; 6] = [
        SearchMode::Full,
        SearchMode::NetworkArchiveOnly,
        SearchMode::PromptArchiveOnly,
        SearchMode::MutationOnly,
        SearchMode::CrossoverOnly,
        SearchMode::RandomGeneration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SearchMode::Full => "full",
            SearchMode::NetworkArchiveOnly => "network-archive-only",
            SearchMode::PromptArchiveOnly => "prompt-archive-only",
            SearchMode::MutationOnly => "mutation-only",
            SearchMode::CrossoverOnly => "crossover-only",
            SearchMode::RandomGeneration => "random-generation",
        }
    }
}

impl std::str::FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SearchMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = SearchMode::ALL.iter().map(|m| m.name()).collect();
                format!("unknown mode {s:?}; expected one of {}", names.join(", "))
            })
    }
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Total generations, initialization batches included.
    pub generations: u64,
    pub batch_size: usize,
    pub random_initial_networks: usize,
    pub max_init_batches: u64,
    pub p_mutation: f64,
    pub p_crossover: f64,
    pub crossover_top_n: usize,
    /// Neighbors per top network; 2 or 3.
    pub crossover_neighbors: usize,
    pub crossover_temperature: f64,
    pub initial_temperature: f64,
    pub rng_seed: u64,
    pub mode: SearchMode,
    /// Cells per archive.
    pub archive_size: usize,
    pub centroid_samples: usize,
    pub centroid_seed: u64,
    pub max_tokens: u32,
    /// Concurrent completion requests.
    pub completion_parallelism: usize,
    /// Logs carry `wall_time_s = 0` unless set, so reruns compare byte-equal.
    pub record_wall_time: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            generations: 20,
            batch_size: 100,
            random_initial_networks: 10,
            max_init_batches: 10,
            p_mutation: 0.7,
            p_crossover: 0.3,
            crossover_top_n: 10,
            crossover_neighbors: 3,
            crossover_temperature: 0.7,
            initial_temperature: 0.6,
            rng_seed: 0,
            mode: SearchMode::Full,
            archive_size: 100,
            centroid_samples: crate::qd::DEFAULT_SAMPLES,
            centroid_seed: 0,
            max_tokens: crate::operators::DEFAULT_MAX_TOKENS,
            completion_parallelism: 1,
            record_wall_time: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let fail = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.generations == 0 {
            return fail("search.generations must be positive");
        }
        if self.batch_size == 0 {
            return fail("search.batch_size must be positive");
        }
        if self.random_initial_networks == 0 {
            return fail("search.random_initial_networks must be positive");
        }
        if self.max_init_batches == 0 {
            return fail("search.max_init_batches must be positive");
        }
        for (name, p) in [("p_mutation", self.p_mutation), ("p_crossover", self.p_crossover)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SearchError::Config(format!("search.{name} must be in [0, 1]")));
            }
        }
        if (self.p_mutation + self.p_crossover - 1.0).abs() > 1e-9 {
            return fail("search.p_mutation + search.p_crossover must equal 1");
        }
        if self.crossover_top_n == 0 {
            return fail("search.crossover_top_n must be positive");
        }
        if !(2..=3).contains(&self.crossover_neighbors) {
            return fail("search.crossover_neighbors must be 2 or 3");
        }
        for (name, t) in [
            ("crossover_temperature", self.crossover_temperature),
            ("initial_temperature", self.initial_temperature),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(SearchError::Config(format!("search.{name} must be in [0, 1]")));
            }
        }
        if self.archive_size == 0 {
            return fail("search.archive_size must be positive");
        }
        if self.centroid_samples < self.archive_size {
            return fail("search.centroid_samples must be at least archive_size");
        }
        if self.max_tokens == 0 {
            return fail("search.max_tokens must be positive");
        }
        if self.completion_parallelism == 0 {
            return fail("search.completion_parallelism must be positive");
        }
        Ok(())
    }

    pub fn rules(&self) -> ModeRules {
        ModeRules::for_mode(self.mode, self.p_mutation)
    }
}

/// Behavioral switches derived from the mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRules {
    pub p_mutation: f64,
    pub network_archive: bool,
    pub prompt_archive: bool,
    /// Every generation mutates the seed network with random prompts.
    pub random_generation: bool,
}

impl ModeRules {
    pub fn for_mode(mode: SearchMode, p_mutation: f64) -> Self {
        let full = Self {
            p_mutation,
            network_archive: true,
            prompt_archive: true,
            random_generation: false,
        };
        match mode {
            SearchMode::Full => full,
            SearchMode::NetworkArchiveOnly => Self {
                prompt_archive: false,
                ..full
            },
            SearchMode::PromptArchiveOnly => Self {
                p_mutation: 1.0,
                network_archive: false,
                ..full
            },
            SearchMode::MutationOnly => Self {
                p_mutation: 1.0,
                ..full
            },
            SearchMode::CrossoverOnly => Self {
                p_mutation: 0.0,
                prompt_archive: false,
                ..full
            },
            SearchMode::RandomGeneration => Self {
                p_mutation: 1.0,
                network_archive: false,
                prompt_archive: false,
                random_generation: true,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(SearchConfig::default().validate().is_ok());
    }

    #[test]
    fn rejects_bad_probabilities() {
        let c = SearchConfig {
            p_mutation: 0.8,
            ..SearchConfig::default()
        };
        assert!(c.validate().is_err());
        let c = SearchConfig {
            crossover_neighbors: 4,
            ..SearchConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in SearchMode::ALL {
            assert_eq!(m.name().parse::<SearchMode>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("bogus".parse::<SearchMode>().is_err());
    }

    #[test]
    fn mode_overrides() {
        assert_eq!(ModeRules::for_mode(SearchMode::MutationOnly, 0.7).p_mutation, 1.0);
        let c = ModeRules::for_mode(SearchMode::CrossoverOnly, 0.7);
        assert_eq!(c.p_mutation, 0.0);
        assert!(!c.prompt_archive);
        let p = ModeRules::for_mode(SearchMode::PromptArchiveOnly, 0.7);
        assert!(!p.network_archive && p.prompt_archive && p.p_mutation == 1.0);
        let r = ModeRules::for_mode(SearchMode::RandomGeneration, 0.7);
        assert!(r.random_generation && !r.network_archive && !r.prompt_archive);
    }
}
