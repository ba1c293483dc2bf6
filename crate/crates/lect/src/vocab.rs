//! Fixed topic vocabulary shared by the template text generator and the
//! synthetic benchmark. Topics are grouped into domains; each topic owns a
//! disjoint word pool. The template generator treats this as its world
//! knowledge: near-OOD categories come from the same domain as the IND
//! classes, far-OOD categories from other domains.

pub struct Topic {
    pub domain: &'static str,
    pub name: &'static str,
    pub words: &'static [&'static str],
}

pub const TOPICS: &[Topic] = &[
    Topic {
        domain: "computing",
        name: "neural networks",
        words: &[
            "gradient", "activation", "backpropagation", "perceptron", "layer", "weights",
            "convolution", "dropout", "epoch", "softmax", "embedding", "attention", "pooling",
            "regularization",
        ],
    },
    Topic {
        domain: "computing",
        name: "databases",
        words: &[
            "query", "index", "transaction", "schema", "join", "shard", "replication", "btree",
            "rollback", "normalization", "cursor", "snapshot", "tuple", "deadlock",
        ],
    },
    Topic {
        domain: "computing",
        name: "operating systems",
        words: &[
            "scheduler", "interrupt", "kernel", "paging", "semaphore", "filesystem", "thread",
            "syscall", "preemption", "mutex", "swap", "driver", "bootloader", "virtualization",
        ],
    },
    Topic {
        domain: "computing",
        name: "compilers",
        words: &[
            "parser", "lexer", "optimization", "register", "bytecode", "inlining", "grammar",
            "codegen", "linker", "ast", "tokenizer", "typechecking", "monomorphization",
            "peephole",
        ],
    },
    Topic {
        domain: "biology",
        name: "genetics",
        words: &[
            "chromosome", "allele", "genome", "mutation", "heredity", "phenotype", "sequencing",
            "plasmid", "transcription", "ribosome", "codon", "crispr", "genotype", "meiosis",
        ],
    },
    Topic {
        domain: "biology",
        name: "ecology",
        words: &[
            "habitat", "biodiversity", "predator", "biome", "symbiosis", "foodweb", "migration",
            "wetland", "conservation", "trophic", "population", "invasive", "pollinator",
            "succession",
        ],
    },
    Topic {
        domain: "biology",
        name: "virology",
        words: &[
            "capsid", "antigen", "pathogen", "vaccine", "replication2", "epidemic", "antibody",
            "outbreak", "virion", "mutation2", "transmission", "immunity", "incubation",
            "serology",
        ],
    },
    Topic {
        domain: "economics",
        name: "markets",
        words: &[
            "equity", "dividend", "volatility", "portfolio", "arbitrage", "liquidity", "futures",
            "hedge", "valuation", "bullish", "brokerage", "commodity", "derivative", "yield",
        ],
    },
    Topic {
        domain: "economics",
        name: "banking",
        words: &[
            "deposit", "collateral", "mortgage", "solvency", "interest", "lending", "reserve",
            "underwriting", "creditor", "overdraft", "remittance", "escrow", "insolvency",
            "amortization",
        ],
    },
    Topic {
        domain: "economics",
        name: "taxation",
        words: &[
            "levy", "deduction", "audit", "bracket", "tariff", "exemption", "withholding",
            "surcharge", "revenue", "filing", "rebate", "excise", "depreciation", "duty",
        ],
    },
];

/// Generic filler words used by the random-text ablation generator.
pub const FILLER: &[&str] = &[
    "study", "analysis", "report", "survey", "method", "result", "approach", "overview",
    "framework", "discussion", "system", "process", "model", "review", "context", "example",
];

pub fn topic_by_name(name: &str) -> Option<&'static Topic> {
    TOPICS.iter().find(|t| t.name.eq_ignore_ascii_case(name))
}

pub fn domains() -> Vec<&'static str> {
    let mut out: Vec<&'static str> = Vec::new();
    for t in TOPICS {
        if !out.contains(&t.domain) {
            out.push(t.domain);
        }
    }
    out
}

/// Majority domain of the given class names; falls back to a hash-picked
/// domain when no name matches a known topic.
pub fn main_domain(class_names: &[String]) -> &'static str {
    let ds = domains();
    let mut counts = vec![0usize; ds.len()];
    for name in class_names {
        if let Some(t) = topic_by_name(name) {
            let i = ds.iter().position(|d| *d == t.domain).unwrap();
            counts[i] += 1;
        }
    }
    if let Some((best, &c)) = counts.iter().enumerate().max_by_key(|&(_, c)| *c) {
        if c > 0 {
            return ds[best];
        }
    }
    let joined = class_names.join("|");
    ds[(crate::seeds::fnv1a(joined.as_bytes()) % ds.len() as u64) as usize]
}

/// Candidate OOD topics: near = same domain as the IND classes, far =
/// other domains, both excluding the IND class names themselves. An empty
/// pool falls back to all non-IND topics.
pub fn candidate_topics(class_names: &[String], near: bool) -> Vec<&'static Topic> {
    let domain = main_domain(class_names);
    let excluded: Vec<String> = class_names.iter().map(|s| s.to_lowercase()).collect();
    let not_ind = |t: &&'static Topic| !excluded.contains(&t.name.to_lowercase());
    let pool: Vec<&'static Topic> = TOPICS
        .iter()
        .filter(not_ind)
        .filter(|t| (t.domain == domain) == near)
        .collect();
    if pool.is_empty() {
        TOPICS.iter().filter(not_ind).collect()
    } else {
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topic_words_are_disjoint() {
        let mut seen = std::collections::HashSet::new();
        for t in TOPICS {
            for w in t.words {
                assert!(seen.insert(*w), "word {w} appears in more than one topic");
            }
        }
    }

    #[test]
    fn main_domain_majority_vote() {
        let names: Vec<String> =
            ["neural networks", "databases", "genetics"].iter().map(|s| s.to_string()).collect();
        assert_eq!(main_domain(&names), "computing");
    }

    #[test]
    fn near_pool_excludes_ind_topics() {
        let names: Vec<String> =
            ["neural networks", "databases", "operating systems"].iter().map(|s| s.to_string()).collect();
        let near = candidate_topics(&names, true);
        assert!(near.iter().all(|t| t.domain == "computing"));
        assert!(near.iter().all(|t| !names.contains(&t.name.to_string())));
        assert!(near.iter().any(|t| t.name == "compilers"));
    }

    #[test]
    fn far_pool_is_other_domains() {
        let names: Vec<String> = ["neural networks"].iter().map(|s| s.to_string()).collect();
        let far = candidate_topics(&names, false);
        assert!(!far.is_empty());
        assert!(far.iter().all(|t| t.domain != "computing"));
    }

    #[test]
    fn unknown_names_still_get_a_domain() {
        let names: Vec<String> = ["alpha", "beta"].iter().map(|s| s.to_string()).collect();
        assert!(domains().contains(&main_domain(&names)));
    }
}
