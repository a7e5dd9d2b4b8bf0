from .events import (
    FEATURES,
    MIN_EVENT_SAMPLES,
    SAMPLE_RATE,
    SPEEDS,
    DriverParams,
    GeneratorConfig,
    LaneChangeEvent,
    by_speed,
    generate_dataset,
    generate_synthetic_event,
    lateral_profile,
    make_drivers,
)
from .io import read_events, read_event_csv, write_events, write_event_csv
from .windows import (
    EventSplit,
    MinMaxStats,
    PreparedData,
    WindowedDataset,
    denormalize,
    holdout_validation,
    minmax_fit,
    normalize,
    prepare,
    slide_windows,
    split_by_driver,
    window_count,
)
