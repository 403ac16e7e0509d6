#pragma once

#include <string>
#include <string_view>

#include "deltalab/common.hpp"
#include "deltalab/policy.hpp"

namespace deltalab {

// Shared task vocabulary. Digits occupy ids 0..9.
namespace tok {
inline constexpr TokenId kPlus = 10;
inline constexpr TokenId kOpen = 11;
inline constexpr TokenId kClose = 12;
inline constexpr TokenId kFiller = 13;     ///< free-form "reasoning" token
inline constexpr TokenId kDelimiter = 14;  ///< marks the start of the final answer
inline constexpr TokenId kEos = 15;
inline constexpr std::size_t kVocabSize = 16;
}  // namespace tok

Vocabulary task_vocabulary();
std::string token_name(TokenId t);
std::string render_tokens(std::span<const TokenId> tokens);

enum class TaskKind { ModularAddition, Parity, CopyReverse, BracketBalance };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::ModularAddition;
  /// Modulus for modular addition (2..100). Operands are drawn from [0, modulus).
  int modulus = 10;
  /// Sequence length for parity, copy-reverse and bracket-balance.
  int length = 3;

  void validate() const;
  std::size_t prompt_length_bound() const;
  std::size_t answer_length_bound() const;
  /// Smallest feature window under which every answer token still sees the
  /// prompt tokens it depends on, assuming the shortest response format
  /// (delimiter, answer, end-of-sequence).
  std::size_t required_window() const;
  /// Tokens that may appear inside an answer.
  Tokens answer_alphabet() const;
};

struct PromptInstance {
  Tokens prompt;
  Tokens answer;
};

PromptInstance generate_prompt(const TaskSpec& task, Rng& rng);

/// Binary verifiable reward: 1 iff the tokens between the last delimiter and
/// the end-of-sequence token equal the canonical answer.
double verify(const TaskSpec& task, const PromptInstance& prompt, std::span<const TokenId> response);

/// Canonical well-formed response: delimiter, answer, end-of-sequence.
Tokens canonical_response(const PromptInstance& prompt);

}  // namespace deltalab
