#pragma once

#include "hers/error.hpp"
#include "hers/rng.hpp"
#include "hers/linalg/matrix.hpp"
#include "hers/linalg/eigen.hpp"
#include "hers/linalg/gaussian.hpp"
#include "hers/net/lora.hpp"
#include "hers/net/mlp.hpp"
#include "hers/net/adam.hpp"
#include "hers/net/grad_check.hpp"
#include "hers/diffusion/diffusion.hpp"
#include "hers/promptbank/text.hpp"
#include "hers/promptbank/bank.hpp"
#include "hers/promptbank/default_grammar.hpp"
#include "hers/experts/experts.hpp"
#include "hers/metrics/metrics.hpp"
#include "hers/pipeline/config.hpp"
#include "hers/pipeline/io.hpp"
#include "hers/pipeline/data.hpp"
#include "hers/pipeline/checkpoint.hpp"
#include "hers/pipeline/report.hpp"
#include "hers/pipeline/stages.hpp"
