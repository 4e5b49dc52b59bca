from .gradcheck import GradCheckReport, finite_difference_check
from .optim import AdamW, LrSchedule, clip_by_global_norm, schedule_factor
from .tape import Tape, apply_primitive, backward
