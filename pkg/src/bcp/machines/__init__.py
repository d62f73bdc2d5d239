"""Machine models and the reduction pipeline from randomised Turing machines
to multiplicative counter machines."""
from .interp import TIMEOUT, MachineResult, rtm_run, run_cm, run_stack_machine
from .models import (
    BLANK,
    RTM,
    ArityMismatch,
    CounterMachine,
    CounterOverflow,
    MachineError,
    SpaceBoundViolation,
    StackMachine,
    cm_step,
    halting_cm,
    parity_rtm,
    power_of_two_cm,
)
from .passes import (
    compile_tm_to_cm,
    multistack,
    split_stacks,
    stack_counters,
    stack_input,
    stack_to_cm,
    tm_to_stack,
    tm_to_two_stacks,
    unary_to_binary_tm,
)
from .formats import (
    MachineParseError,
    format_cm,
    format_machine,
    format_rtm,
    format_sm,
    parse_cm,
    parse_machine,
    parse_rtm,
    parse_sm,
)

__all__ = [
    "BLANK",
    "RTM",
    "ArityMismatch",
    "CounterMachine",
    "CounterOverflow",
    "MachineError",
    "SpaceBoundViolation",
    "StackMachine",
    "cm_step",
    "halting_cm",
    "parity_rtm",
    "power_of_two_cm",
    "compile_tm_to_cm",
    "multistack",
    "split_stacks",
    "stack_counters",
    "stack_input",
    "stack_to_cm",
    "tm_to_stack",
    "tm_to_two_stacks",
    "unary_to_binary_tm",
    "MachineParseError",
    "format_cm",
    "format_machine",
    "format_rtm",
    "format_sm",
    "parse_cm",
    "parse_machine",
    "parse_rtm",
    "parse_sm",
    "TIMEOUT",
    "MachineResult",
    "rtm_run",
    "run_cm",
    "run_stack_machine",
]
