"""
Default settings for the IWO collaborative filtering engine
"""


class Settings:
    # Similarity filtering
    K = 0.2
    THETA = 0.6

    # Invasive weed optimization
    S_MIN = 0
    S_MAX = 7
    SIGMA_INITIAL = 1.0
    SIGMA_FINAL = 0.001
    N = 5.0
    T = 300
    POP_INITIAL = 10
    POP_MAX = 200

    # Experiment protocol
    SPLIT_FRACTION = 0.2
    SPLIT_SEED = 42
    FITNESS_HOLDOUT_FRACTION = 0.25
    GLOBAL_SEED = 42
    BASELINE = 'proposed'
    DATASET_FORMAT = 'generic'
    OUTPUT_DIR = 'results'
    LOG_LEVEL = 'INFO'

    # Environment variable overriding the global seed
    GLOBAL_SEED_ENV = 'IWO_CF_GLOBAL_SEED'

    @classmethod
    def as_dict(cls):
        """Return the defaults table keyed by lowercase setting name"""
        return {
            name.lower(): value
            for name, value in vars(cls).items()
            if name.isupper() and name != 'GLOBAL_SEED_ENV'
        }
