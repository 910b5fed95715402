#pragma once

#include "rawmodel/params.hpp"
#include "rawmodel/tx_prob_table.hpp"
#include "rawmodel/time_distribution.hpp"
#include "rawmodel/process_a.hpp"
#include "rawmodel/process_b.hpp"
#include "rawmodel/chains.hpp"
#include "rawmodel/simulator.hpp"
#include "rawmodel/planner.hpp"
#include "rawmodel/compare.hpp"
#include "rawmodel/io.hpp"
