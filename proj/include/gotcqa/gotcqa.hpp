#pragma once

#include "gotcqa/chart.hpp"
#include "gotcqa/checkpoint.hpp"
#include "gotcqa/decoder.hpp"
#include "gotcqa/default_rules.hpp"
#include "gotcqa/error.hpp"
#include "gotcqa/got.hpp"
#include "gotcqa/model.hpp"
#include "gotcqa/nn.hpp"
#include "gotcqa/provider.hpp"
#include "gotcqa/question_parser.hpp"
#include "gotcqa/reasoning.hpp"
#include "gotcqa/synth.hpp"
#include "gotcqa/tensor.hpp"
#include "gotcqa/text.hpp"
#include "gotcqa/vocab.hpp"
#include "gotcqa/gradcheck.hpp"
#include "gotcqa/harness.hpp"
