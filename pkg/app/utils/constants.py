# Exit codes
EXIT_CODES = {
    "SUCCESS": 0,
    "INPUT_ERROR": 2,          # Unreadable file, malformed row, bad option
    "ESTIMATION_UNDEFINED": 3, # No matched group / no usable stratum
    "INTERNAL_ERROR": 4,       # Anything unexpected
}

# Interference components, in outcome-weight order
COMPONENT_NAMES = [
    "treated_degree",      # d
    "treated_triangles",   # triangles with a treated member
    "treated_2stars",      # 2-stars with a treated member
    "treated_4stars",      # 4-stars with a treated member
    "dagger_3",            # degree >= 3 with a treated neighbor
    "betweenness",         # normalized vertex betweenness
    "closeness",           # normalized closeness
]

# Short names accepted in configs for multiplicative component sets
COMPONENT_ALIASES = {
    "d": "treated_degree",
    "triangles": "treated_triangles",
    "star2": "treated_2stars",
    "star4": "treated_4stars",
    "dagger": "dagger_3",
    "B": "betweenness",
    "C": "closeness",
}

# Estimators
FLAME = "flame_networks"
NAIVE = "naive"
FIRST_EIGEN = "first_eigenvector"
ALL_EIGEN = "all_eigenvectors"
STRATIFIED = "stratified_naive"
SANIA = "sania"
TRUE_F = "true_f_matching"

BASELINE_ESTIMATORS = [NAIVE, FIRST_EIGEN, ALL_EIGEN, STRATIFIED, SANIA]
ALL_ESTIMATORS = [FLAME] + BASELINE_ESTIMATORS

# Column kinds in a feature table
SUBGRAPH_KIND = "subgraph"
COVARIATE_KIND = "covariate"

# Output file names
OUTPUT_FILES = {
    "CENSUS": "census.csv",
    "MOTIFS": "motifs.csv",
    "COMPONENTS": "components.csv",
    "ESTIMATES": "estimates.json",
    "GROUPS": "matched_groups.csv",
    "DROP_LOG": "drop_log.csv",
    "REPLICATIONS": "replications.csv",
    "SUMMARY": "summary.json",
    "MATCH_QUALITY": "match_quality.json",
    "BASELINES": "baselines.json",
    "REGIME_TREND": "regime_trend.json",
}

FLOAT_FORMAT = "%.12g"

# exp1 preset weights: (d, triangles, 2-stars, 4-stars, dagger, B, C)
EXP1_SETTINGS = {
    1: [0, 10, 0, 0, 0, 0, 0],
    2: [10, 10, 0, 0, 0, 0, 0],
    3: [0, 10, 1, 1, 1, 1, -1],
    4: [5, 1, 10, 1, 1, 1, -1],
}

# Multiplicative settings: included components
MULT_SETTINGS = {
    1: ["treated_degree", "treated_triangles"],
    2: ["treated_degree", "betweenness"],
    3: ["treated_triangles", "betweenness"],
    4: ["treated_triangles", "treated_4stars"],
}

# f = d + triangles + B
EXP2_GAMMA = [1, 1, 0, 0, 0, 1, 0]


def _additive(gamma):
    return {"kind": "additive", "gamma": list(gamma)}


PRESETS = {
    **{
        f"exp1-s{k}": {
            "name": f"exp1-s{k}",
            "graph": {"model": "er", "n": 50, "q": 0.05},
            "interference": _additive(gamma),
            "replications": 50,
        }
        for k, gamma in EXP1_SETTINGS.items()
    },
    **{
        f"exp2-b{beta}": {
            "name": f"exp2-b{beta}",
            "graph": {"model": "er", "n": 50, "q": 0.05},
            "interference": _additive(EXP2_GAMMA),
            "covariate": {"beta": beta, "levels": [1, 2, 3]},
            "replications": reps,
        }
        for beta, reps in ((5, 40), (20, 10), (25, 10))
    },
    "exp3": {
        "name": "exp3",
        "graph": {"model": "er", "n": 75, "q": 0.07, "fixed": True},
        "interference": {"kind": "misspecified", "misspecified_gamma": 0.0},
        "sweep": [0.0, 2.5, 5.0],
        "replications": 50,
    },
    **{
        f"mult-s{k}": {
            "name": f"mult-s{k}",
            "graph": {"model": "er", "n": 50, "q": 0.05},
            "interference": {"kind": "multiplicative", "components": comps, "alpha": 1.0},
            "replications": 50,
        }
        for k, comps in MULT_SETTINGS.items()
    },
    "sbm": {
        "name": "sbm",
        "graph": {"model": "sbm", "block_sizes": [10] * 5, "p_within": 0.3, "p_between": 0.05},
        "randomization": {"design": "cluster", "treated_per_block": 5},
        "interference": _additive(EXP1_SETTINGS[3]),
        "replications": 50,
    },
    "hetero": {
        "name": "hetero",
        "graph": {"model": "er", "n": 50, "q": 0.07, "fixed": True},
        "randomization": {"design": "complete", "n_treated": 25},
        "interference": _additive(EXP1_SETTINGS[3]),
        "errors": {"kind": "heteroskedastic"},
        "replications": 50,
    },
    "true-f": {
        "name": "true-f",
        "graph": {"model": "er", "n": 50, "q": 0.07, "fixed": True},
        "randomization": {"design": "complete", "n_treated": 25},
        "interference": _additive(EXP1_SETTINGS[3]),
        "match_on_true_f": True,
        "replications": 50,
    },
    "matchqual": {
        "name": "matchqual",
        "graph": {"model": "er", "n": 50, "q": 0.07, "fixed": True},
        "randomization": {"design": "complete", "n_treated": 25},
        "interference": _additive(EXP1_SETTINGS[3]),
        "match_on_true_f": True,
        "match_quality": True,
        "replications": 50,
    },
}

# Response Messages
SUCCESS_MESSAGES = {
    "CENSUS_WRITTEN": "Census written",
    "ESTIMATE_WRITTEN": "Estimates written",
    "SIMULATION_WRITTEN": "Simulation reports written",
    "BASELINES_WRITTEN": "Baseline estimates written",
    "EVALUATION_WRITTEN": "Match quality written",
}

ERROR_MESSAGES = {
    "UNREADABLE_FILE": "Could not read input file",
    "MALFORMED_ROW": "Malformed row",
    "MISSING_COLUMNS": "Missing required columns",
    "DUPLICATE_IDS": "Unit ids must be unique",
    "UNKNOWN_UNIT": "Edge references a unit missing from the unit table",
    "MISSING_ARM": "Both treatment arms must be present",
    "NO_MATCHES": "No treated unit was matched; the estimate is undefined",
    "NO_STRATUM": "No treated-degree stratum contains both arms",
    "UNKNOWN_PRESET": "Unknown preset",
    "ALL_UNITS_REMOVED": "Degree cap removed every unit",
    "INVALID_CONFIG": "Invalid configuration",
}
