// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/smiles.h"

#include <gtest/gtest.h>

#include "corpus.h"
#include "expect_error.h"

namespace molstack {
namespace {

TEST(ParseSmilesTest, SingleAtom) {
  const MolGraph mol = parse_smiles("C");
  EXPECT_EQ(mol.atom_count(), 1);
  EXPECT_EQ(mol.bond_count(), 0);
  EXPECT_EQ(mol.atom(0).element, Element::C);
}

TEST(ParseSmilesTest, ChainWithBondOrders) {
  const MolGraph mol = parse_smiles("C=CC#N");
  ASSERT_EQ(mol.atom_count(), 4);
  ASSERT_EQ(mol.bond_count(), 3);
  EXPECT_EQ(mol.bond(0).order, BondOrder::kDouble);
  EXPECT_EQ(mol.bond(1).order, BondOrder::kSingle);
  EXPECT_EQ(mol.bond(2).order, BondOrder::kTriple);
  EXPECT_EQ(mol.atom(3).element, Element::N);
}

TEST(ParseSmilesTest, TwoLetterElements) {
  const MolGraph mol = parse_smiles("ClCBr");
  ASSERT_EQ(mol.atom_count(), 3);
  EXPECT_EQ(mol.atom(0).element, Element::Cl);
  EXPECT_EQ(mol.atom(2).element, Element::Br);
}

TEST(ParseSmilesTest, BranchesSetDegrees) {
  const MolGraph mol = parse_smiles("CC(C)(C)C");
  EXPECT_EQ(mol.atom_count(), 5);
  EXPECT_EQ(mol.degree(1), 4);
  EXPECT_EQ(mol.degree(0), 1);
}

TEST(ParseSmilesTest, AromaticRingUsesAromaticBonds) {
  const MolGraph mol = parse_smiles("c1ccccc1");
  EXPECT_EQ(mol.atom_count(), 6);
  EXPECT_EQ(mol.bond_count(), 6);
  for (const Bond& b : mol.bonds()) EXPECT_EQ(b.order, BondOrder::kAromatic);
  for (const Atom& a : mol.atoms()) EXPECT_TRUE(a.aromatic);
}

TEST(ParseSmilesTest, AromaticToAliphaticBondIsSingle) {
  const MolGraph mol = parse_smiles("Cc1ccccc1");
  EXPECT_EQ(mol.bond(0).order, BondOrder::kSingle);
  EXPECT_EQ(mol.bond(1).order, BondOrder::kAromatic);
}

TEST(ParseSmilesTest, RingClosureBondSymbol) {
  const MolGraph mol = parse_smiles("C1CC=1");
  const int b = mol.bond_between(0, 2);
  ASSERT_GE(b, 0);
  EXPECT_EQ(mol.bond(b).order, BondOrder::kDouble);
}

TEST(ParseSmilesTest, PercentRingNumbers) {
  const MolGraph mol = parse_smiles("C%12CCC%12");
  EXPECT_EQ(mol.bond_count(), 4);
  EXPECT_GE(mol.bond_between(0, 3), 0);
}

TEST(ParseSmilesTest, RingNumberReuse) {
  const MolGraph mol = parse_smiles("C1CC1C1CC1");
  EXPECT_EQ(mol.atom_count(), 6);
  EXPECT_EQ(mol.bond_count(), 7);
}

TEST(ParseSmilesTest, BracketAtomsWithCharges) {
  const MolGraph mol = parse_smiles("[NH4+].[O-].[Se]");
  ASSERT_EQ(mol.atom_count(), 3);
  EXPECT_EQ(mol.atom(0).formal_charge, 1);
  EXPECT_EQ(mol.atom(1).formal_charge, -1);
  EXPECT_EQ(mol.atom(2).element, Element::Se);
  EXPECT_EQ(mol.component_count(), 3);
}

TEST(ParseSmilesTest, MultipleChargeForms) {
  EXPECT_EQ(parse_smiles("[O--]").atom(0).formal_charge, -2);
  EXPECT_EQ(parse_smiles("[N+2]").atom(0).formal_charge, 2);
  EXPECT_EQ(parse_smiles("[nH]1cccc1").atom(0).aromatic, true);
}

TEST(ParseSmilesTest, DotSeparatesComponents) {
  const MolGraph mol = parse_smiles("CC.O");
  EXPECT_EQ(mol.atom_count(), 3);
  EXPECT_EQ(mol.bond_count(), 1);
  EXPECT_EQ(mol.component_count(), 2);
  EXPECT_EQ(mol.components(), (std::vector<int>{0, 0, 1}));
}

TEST(ParseSmilesTest, Caffeine) {
  const MolGraph mol = parse_smiles(testing::kCaffeine);
  EXPECT_EQ(mol.atom_count(), 14);
  EXPECT_EQ(mol.bond_count(), 15);
}

TEST(ParseSmilesErrorTest, EmptyInput) {
  EXPECT_MOLSTACK_ERROR(parse_smiles(""), ErrorCode::kEmptyInput);
}

TEST(ParseSmilesErrorTest, UnsupportedTokens) {
  EXPECT_MOLSTACK_ERROR(parse_smiles("[Fe]"), ErrorCode::kUnsupportedToken);
  EXPECT_MOLSTACK_ERROR(parse_smiles("[13C]"), ErrorCode::kUnsupportedToken);
  EXPECT_MOLSTACK_ERROR(parse_smiles("C[C@H](O)N"), ErrorCode::kUnsupportedToken);
  EXPECT_MOLSTACK_ERROR(parse_smiles("F/C=C/F"), ErrorCode::kUnsupportedToken);
  EXPECT_MOLSTACK_ERROR(parse_smiles("[CH3:1]"), ErrorCode::kUnsupportedToken);
  EXPECT_MOLSTACK_ERROR(parse_smiles("[H]"), ErrorCode::kUnsupportedToken);
  EXPECT_MOLSTACK_ERROR(parse_smiles("CXC"), ErrorCode::kUnsupportedToken);
}

TEST(ParseSmilesErrorTest, UnmatchedRingClosure) {
  EXPECT_MOLSTACK_ERROR(parse_smiles("C1CC"), ErrorCode::kUnmatchedRingClosure);
}

TEST(ParseSmilesErrorTest, UnbalancedParentheses) {
  EXPECT_MOLSTACK_ERROR(parse_smiles("C(C"), ErrorCode::kUnbalancedParenthesis);
  EXPECT_MOLSTACK_ERROR(parse_smiles("C)C"), ErrorCode::kUnbalancedParenthesis);
}

TEST(ParseSmilesErrorTest, InvalidBonds) {
  EXPECT_MOLSTACK_ERROR(parse_smiles("C11"), ErrorCode::kInvalidBond);
  EXPECT_MOLSTACK_ERROR(parse_smiles("C12CC12"), ErrorCode::kInvalidBond);
}

TEST(MolGraphTest, RejectsSelfLoopsAndDuplicates) {
  MolGraph mol;
  mol.add_atom(Element::C, false, 0);
  mol.add_atom(Element::O, false, 0);
  mol.add_bond(0, 1, BondOrder::kSingle);
  EXPECT_MOLSTACK_ERROR(mol.add_bond(1, 0, BondOrder::kDouble), ErrorCode::kInvalidBond);
  EXPECT_MOLSTACK_ERROR(mol.add_bond(0, 0, BondOrder::kSingle), ErrorCode::kInvalidBond);
}

TEST(MolGraphTest, PermuteAtomsKeepsBonds) {
  const MolGraph mol = parse_smiles("CCO");
  const MolGraph p = permute_atoms(mol, {2, 0, 1});
  EXPECT_EQ(p.atom(2).element, Element::C);
  EXPECT_EQ(p.atom(1).element, Element::O);
  EXPECT_GE(p.bond_between(2, 0), 0);
  EXPECT_GE(p.bond_between(0, 1), 0);
  EXPECT_EQ(p.bond(0).order, mol.bond(0).order);
}

TEST(MoleculeStatsTest, CountsElementsAndBonds) {
  const MoleculeStats s = molecule_stats(parse_smiles("OC(=O)c1ccccc1"));
  EXPECT_EQ(s.heavy_atoms, 9);
  EXPECT_EQ(s.element_counts[static_cast<int>(Element::O)], 2);
  EXPECT_EQ(s.element_counts[static_cast<int>(Element::C)], 7);
  EXPECT_EQ(s.bond_order_counts[static_cast<int>(BondOrder::kDouble)], 1);
  EXPECT_EQ(s.bond_order_counts[static_cast<int>(BondOrder::kAromatic)], 6);
}

TEST(SmilesRecordsTest, SkipsCommentsAndParsesTargets) {
  const auto records = read_smiles_records("# header\nCCO\t1.5\n\nc1ccccc1\n");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].line, 2);
  EXPECT_EQ(records[0].smiles, "CCO");
  EXPECT_DOUBLE_EQ(*records[0].target, 1.5);
  EXPECT_EQ(records[1].line, 4);
  EXPECT_FALSE(records[1].target.has_value());
}

TEST(SmilesRecordsTest, BadTargetIsFormatError) {
  EXPECT_MOLSTACK_ERROR(read_smiles_records("CCO\tabc\n"), ErrorCode::kFormat);
}

TEST(SmilesWriterRoundTripTest, CorpusSurvivesRoundTrip) {
  for (const MolGraph& mol : testing::make_corpus(7, 200)) {
    const std::string smiles = testing::write_smiles(mol);
    const MolGraph back = parse_smiles(smiles);
    EXPECT_EQ(back.atom_count(), mol.atom_count()) << smiles;
    EXPECT_EQ(back.bond_count(), mol.bond_count()) << smiles;
    EXPECT_EQ(back.component_count(), mol.component_count()) << smiles;
  }
}

}  // namespace
}  // namespace molstack
