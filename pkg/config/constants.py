"""
Configuration constants for the NHDF CR-VANET simulator.

Simulation defaults mirror the evaluation environment (nodes, channels, run
time, packet size, data rate, queue, range, speed); the remaining values are
protocol and model constants that the scenario file may override.
"""

APP_NAME = "NHDF CR-VANET Simulator"
APP_VERSION = "1.0.1"

# Simulation environment
DEFAULT_NODE_COUNTS = (120, 140, 160, 180, 200)
DEFAULT_AREA_SIDE = 4000.0           # meters, square side
DEFAULT_NUM_CHANNELS = 100
DEFAULT_RUN_TIME = 150.0             # seconds
DEFAULT_PACKET_SIZE_BYTES = 512
DEFAULT_DATA_RATE = 2_000_000.0      # bits/second
DEFAULT_QUEUE_CAPACITY = 50          # packets, drop-tail
DEFAULT_TX_RANGE = 500.0             # meters, closed disc
DEFAULT_MAX_SPEED = 2.0              # meters/second
DEFAULT_MOBILITY_DT = 0.5            # seconds between mobility steps
DEFAULT_SAMPLE_INTERVAL = 10.0       # seconds between metrics samples
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
DEFAULT_PROTOCOLS = ("nhdf", "greedy_baseline")

# Traffic
DEFAULT_FLOW_COUNT = 10
DEFAULT_FLOW_RATE = 4.0              # packets/second
DEFAULT_CONTROL_SIZE_BITS = 512      # RREQ / RREP / RERR / SQN payload

# Ranging (5.9 GHz carrier)
DEFAULT_LOSS_EXPONENT = 2.0
DEFAULT_WAVELENGTH = 0.0508          # meters
DEFAULT_REFERENCE_DISTANCE = 1.0     # meters
DEFAULT_RANGING_NOISE_DB = 0.0

# Mobility
DEFAULT_LATERAL_JITTER = 0.1         # fraction of speed spent off-axis
DEFAULT_MIN_SPEED_FRACTION = 0.5

# Spectrum
DEFAULT_PU_MEAN_ON = 5.0             # seconds
DEFAULT_PU_MEAN_OFF = 15.0           # seconds
DEFAULT_SPATIAL_CELLS = 4            # cells per side (4 x 4 grid)
DEFAULT_SWITCH_STEP_DELAY = 0.010    # seconds per channel index (10 MHz step)

# Metric
DEFAULT_COLLISION_PROB = 0.1
DEFAULT_BACKOFF_WINDOW = 0.001       # seconds
DEFAULT_THETA_FLOOR = 1e-3           # radians
DEFAULT_SPEED_FLOOR = 0.01           # meters/second
DEFAULT_TAU_FLOOR = 1e-3             # meters

# Protocol
DEFAULT_HOP_LIMIT = 16
DEFAULT_DISCOVERY_WINDOW = 2.0       # seconds
DEFAULT_DISCOVERY_SCOPE = "first_copy"
DEFAULT_SUSPICION_WINDOW = 20        # observed relays per neighbor
DEFAULT_SUSPICION_MIN_SAMPLES = 10
DEFAULT_SUSPICION_DROP_THRESHOLD = 0.5
DEFAULT_QUERY_THRESHOLD = 0.5        # Q_t, fraction of suspect votes

# Output
CSV_FILENAME = "results.csv"
PLOT_METRICS = ("pdr", "delay", "throughput")
